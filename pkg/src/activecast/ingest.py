"""CSV ingestion and the merge into a per-country panel of daily series.

Input contracts
---------------
Time-series CSV (one file per series kind)::

    Country,2020-01-22,2020-01-23,...
    Turkey,0,0,...

Dates are ISO ``YYYY-MM-DD`` in strictly increasing daily order with no
gaps; cells are cumulative non-negative integer counts.

Static CSV::

    Country,latitude,longitude,population,...
    Turkey,38.96,35.24,84339067,...

Column names are canonical (see ``STATIC_FEATURES``) or resolvable through
the alias table; cells are decimal numbers, empty means missing.  Unknown
columns are dropped with a warning unless strict mode is on.

Country names are canonicalized through ``COUNTRY_ALIASES`` before
matching; names that not every source shares fall out of the merge
intersection.  Everything numeric is processed in double precision.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    EmptyIntersection,
    GapInDates,
    MalformedCsv,
    NegativeCumulative,
    SeriesLengthMismatch,
    UnmappableHeader,
)

log = logging.getLogger(__name__)

SERIES_KINDS = ("total-confirmed", "total-deaths", "total-recovered")

# The 36 canonical static country features, in canonical column order.
STATIC_FEATURES = (
    "latitude",
    "longitude",
    "population",
    "Density",
    "Urban-Pop",
    "Fertility",
    "Median-Age",
    "Avg-Temperature",
    "Avg-Humidity",
    "Male-Birth",
    "MF",
    "MF-14",
    "MF-25",
    "MF-54",
    "MF-64",
    "MF-65+",
    "Smokers",
    "Bed-Capacity",
    "% Female-Lung",
    "% Male-Lung",
    "% Lung",
    "Pneumonia-Death-100K",
    "H1N1-Underestimate",
    "H1N1-Confirmed",
    "H1N1-Deaths",
    "Annual-Precipitation",
    "Property-Affordability",
    "Health-Care",
    "GDP-2019",
    "Health-Expenses",
    "Health-Expenses-1M",
    "Gathering-Limit",
    "Nonessential-Close-Days",
    "Gathering-Limit-Days",
    "School-Close-Days",
    "PublicPlace-Close-Days",
)

# Extra accepted spellings, keyed by normalized form (see _normalize_header).
STATIC_ALIASES = {
    "lat": "latitude",
    "long": "longitude",
    "lng": "longitude",
    "pop": "population",
    "populationdensity": "Density",
    "urbanpopulation": "Urban-Pop",
    "fertilityrate": "Fertility",
    "medage": "Median-Age",
    "avgtemp": "Avg-Temperature",
    "averagetemperature": "Avg-Temperature",
    "avghumid": "Avg-Humidity",
    "averagehumidity": "Avg-Humidity",
    "malebirthrate": "Male-Birth",
    "mf65": "MF-65+",
    "smokerspct": "Smokers",
    "hospitalbeds": "Bed-Capacity",
    "femalelung": "% Female-Lung",
    "malelung": "% Male-Lung",
    "lung": "% Lung",
    "pneumoniadeathrate100k": "Pneumonia-Death-100K",
    "annualprecip": "Annual-Precipitation",
    "propertyaffordability": "Property-Affordability",
    "healthcareindex": "Health-Care",
    "gdp2019": "GDP-2019",
    "healthexpenses1m": "Health-Expenses-1M",
    "gatheringlimitdays": "Gathering-Limit-Days",
}

# Country name unification across sources.  Unmatched names are simply not
# shared across tables and fall out of the intersection.
COUNTRY_ALIASES = {
    "US": "United States",
    "USA": "United States",
    "United States of America": "United States",
    "UK": "United Kingdom",
    "Korea, South": "South Korea",
    "Republic of Korea": "South Korea",
    "Korea, North": "North Korea",
    "Taiwan*": "Taiwan",
    "Czechia": "Czech Republic",
    "Mainland China": "China",
    "Viet Nam": "Vietnam",
    "Russian Federation": "Russia",
    "Iran (Islamic Republic of)": "Iran",
    "Burma": "Myanmar",
    "Congo (Kinshasa)": "DR Congo",
    "Congo (Brazzaville)": "Congo",
    "Cote d'Ivoire": "Ivory Coast",
    "Cabo Verde": "Cape Verde",
    "Holy See": "Vatican City",
}

_NORMALIZE_RE = re.compile(r"[\s\-_%./]+")


def _normalize_header(name: str) -> str:
    return _NORMALIZE_RE.sub("", name).lower()


_CANONICAL_BY_NORM = {_normalize_header(n): n for n in STATIC_FEATURES}


def canonical_static_name(header: str) -> str | None:
    """Canonical feature name for a header, or None if unmappable."""
    norm = _normalize_header(header)
    if norm in _CANONICAL_BY_NORM:
        return _CANONICAL_BY_NORM[norm]
    return STATIC_ALIASES.get(norm)


def canonical_country(name: str) -> str:
    name = name.strip()
    return COUNTRY_ALIASES.get(name, name)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass
class RawSeriesTable:
    """Cumulative counts: one row per country, one column per calendar day."""

    kind: str
    countries: tuple[str, ...]
    dates: tuple[str, ...]
    values: np.ndarray  # (C, T) float64, integral cumulative counts
    warnings: tuple[str, ...] = ()


@dataclass
class StaticFeatureTable:
    """Per-country static features; NaN marks a missing cell."""

    countries: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray  # (C, S) float64 with NaN for missing
    warnings: tuple[str, ...] = ()


@dataclass
class Panel:
    """Merged per-country daily series plus static features.

    ``active[c, t]`` is confirmed minus cumulative deaths and recoveries at
    day t.  The daily series store the first cumulative value at t=0 and
    first differences afterwards, so cumulative sums reconstruct the inputs
    exactly.  Countries are in lexicographic order and share one date axis.
    """

    countries: tuple[str, ...]
    dates: tuple[str, ...]
    active: np.ndarray            # (C, T)
    deaths_daily: np.ndarray      # (C, T)
    recovered_daily: np.ndarray   # (C, T)
    static_names: tuple[str, ...]
    statics: np.ndarray           # (C, S)
    warnings: tuple[str, ...] = ()

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def country_index(self, country: str) -> int:
        try:
            return self.countries.index(country)
        except ValueError:
            raise KeyError(country) from None


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _read_rows(path) -> list[list[str]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise MalformedCsv(f"{path}: empty file")
    return rows

def _parse_date(token: str, path) -> date:
    try:
        return date.fromisoformat(token.strip())
    except ValueError:
        raise MalformedCsv(f"{path}: header {token!r} is not an ISO date") from None


def _validate_daily(dates: list[date], path) -> None:
    for prev, cur in zip(dates, dates[1:]):
        if cur == prev + timedelta(days=1):
            continue
        if cur <= prev:
            raise MalformedCsv(f"{path}: dates not strictly increasing at {cur}")
        raise GapInDates(f"{path}: missing day between {prev} and {cur}")


def load_timeseries_csv(path, kind: str) -> RawSeriesTable:
    """Load one cumulative time-series CSV.

    Raises :class:`MalformedCsv` for bad headers or cells,
    :class:`GapInDates` when the date columns skip a day, and
    :class:`NegativeCumulative` for negative counts.
    """
    if kind not in SERIES_KINDS:
        raise ValueError(f"unknown series kind {kind!r}")
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 2 or header[0].strip() != "Country":
        raise MalformedCsv(f"{path}: first header cell must be 'Country'")
    dates = [_parse_date(tok, path) for tok in header[1:]]
    _validate_daily(dates, path)

    countries: list[str] = []
    warnings: list[str] = []
    data = []
    seen = set()
    for row in rows[1:]:
        if len(row) != len(header):
            raise MalformedCsv(
                f"{path}: row for {row[0]!r} has {len(row)} cells, expected {len(header)}")
        name = canonical_country(row[0])
        if name != row[0].strip():
            warnings.append(f"country {row[0]!r} read as {name!r}")
        if name in seen:
            raise MalformedCsv(f"{path}: duplicate country {name!r}")
        seen.add(name)
        cells = np.empty(len(dates))
        for i, cell in enumerate(row[1:]):
            try:
                value = float(cell)
            except ValueError:
                raise MalformedCsv(f"{path}: cell {cell!r} in row {name!r}") from None
            if not np.isfinite(value) or value != int(value):
                raise MalformedCsv(
                    f"{path}: cumulative cell {cell!r} in row {name!r} is not an integer")
            if value < 0:
                raise NegativeCumulative(
                    f"{path}: negative cumulative count {cell!r} for {name!r}")
            cells[i] = value
        countries.append(name)
        data.append(cells)
    if not countries:
        raise MalformedCsv(f"{path}: no data rows")
    return RawSeriesTable(
        kind=kind,
        countries=tuple(countries),
        dates=tuple(d.isoformat() for d in dates),
        values=np.vstack(data),
        warnings=tuple(warnings),
    )


def load_static_csv(path, strict: bool = False) -> StaticFeatureTable:
    """Load a static-feature CSV, mapping headers to canonical names.

    Unknown columns are dropped with a warning record; in strict mode they
    raise :class:`UnmappableHeader` instead.  Missing cells stay NaN and are
    resolved at merge time.
    """
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 2 or header[0].strip() != "Country":
        raise MalformedCsv(f"{path}: first header cell must be 'Country'")

    warnings: list[str] = []
    kept: list[tuple[int, str]] = []  # (column position, canonical name)
    seen_features = set()
    for pos, raw_name in enumerate(header[1:], start=1):
        canonical = canonical_static_name(raw_name)
        if canonical is None:
            if strict:
                raise UnmappableHeader(f"{path}: unknown feature column {raw_name!r}")
            warnings.append(f"dropped unknown column {raw_name!r}")
            continue
        if canonical in seen_features:
            raise MalformedCsv(f"{path}: duplicate feature column {canonical!r}")
        seen_features.add(canonical)
        kept.append((pos, canonical))

    countries: list[str] = []
    data = []
    seen = set()
    for row in rows[1:]:
        if len(row) != len(header):
            raise MalformedCsv(
                f"{path}: row for {row[0]!r} has {len(row)} cells, expected {len(header)}")
        name = canonical_country(row[0])
        if name != row[0].strip():
            warnings.append(f"country {row[0]!r} read as {name!r}")
        if name in seen:
            raise MalformedCsv(f"{path}: duplicate country {name!r}")
        seen.add(name)
        cells = np.full(len(kept), np.nan)
        for out_col, (pos, canonical) in enumerate(kept):
            cell = row[pos].strip()
            if cell == "":
                continue
            try:
                value = float(cell)
            except ValueError:
                raise MalformedCsv(f"{path}: cell {cell!r} in row {name!r}") from None
            if canonical == "H1N1-Underestimate" and value not in (0.0, 1.0):
                raise MalformedCsv(
                    f"{path}: H1N1-Underestimate must be 0 or 1, got {cell!r}")
            cells[out_col] = value
        countries.append(name)
        data.append(cells)
    if not countries:
        raise MalformedCsv(f"{path}: no data rows")
    return StaticFeatureTable(
        countries=tuple(countries),
        feature_names=tuple(name for _, name in kept),
        values=np.vstack(data) if kept else np.zeros((len(countries), 0)),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------

def _daily_from_cumulative(cum: np.ndarray, label: str,
                           warnings: list[str]) -> np.ndarray:
    """First differences with the t=0 value kept; negative diffs (data
    corrections upstream) are clamped to 0 with a warning."""
    daily = np.empty_like(cum)
    daily[:, 0] = cum[:, 0]
    daily[:, 1:] = np.diff(cum, axis=1)
    negatives = int((daily < 0).sum())
    if negatives:
        warnings.append(f"clamped {negatives} negative daily {label} values to 0")
        daily = np.maximum(daily, 0.0)
    return daily


def merge_and_clean(confirmed: RawSeriesTable, deaths: RawSeriesTable,
                    recovered: RawSeriesTable,
                    statics: list[StaticFeatureTable],
                    start_date: str | None = None,
                    end_date: str | None = None) -> Panel:
    """Merge the three cumulative tables and static tables into a Panel.

    Countries are the intersection of every input; static features missing
    for any retained country are dropped.  ``start_date``/``end_date``
    (inclusive, ISO) slice the cumulative series before derivation.  Raises
    :class:`EmptyIntersection` or :class:`SeriesLengthMismatch`.
    """
    expected = dict(zip(SERIES_KINDS, (confirmed, deaths, recovered)))
    for kind, table in expected.items():
        if table.kind != kind:
            raise ValueError(f"expected a {kind} table, got {table.kind}")
        if not table.countries:
            raise ValueError(f"{kind} table is empty")

    if not (confirmed.dates == deaths.dates == recovered.dates):
        raise SeriesLengthMismatch("the three series tables must share one date axis")
    dates = list(confirmed.dates)
    lo = 0 if start_date is None else _index_of_date(dates, start_date)
    hi = len(dates) - 1 if end_date is None else _index_of_date(dates, end_date)
    if lo > hi:
        raise ValueError(f"empty date range {start_date}..{end_date}")
    dates = dates[lo:hi + 1]

    shared = set(confirmed.countries) & set(deaths.countries) & set(recovered.countries)
    for table in statics:
        shared &= set(table.countries)
    if not shared:
        raise EmptyIntersection("no country appears in every input table")
    countries = tuple(sorted(shared))

    warnings: list[str] = []
    for table in (confirmed, deaths, recovered, *statics):
        warnings.extend(table.warnings)
    all_names = set(confirmed.countries) | set(deaths.countries) | set(recovered.countries)
    for table in statics:
        all_names |= set(table.countries)
    dropped = sorted(all_names - shared)
    if dropped:
        warnings.append("dropped countries not shared by all inputs: " + ", ".join(dropped))

    def rows_for(table: RawSeriesTable) -> np.ndarray:
        index = {c: i for i, c in enumerate(table.countries)}
        picked = table.values[[index[c] for c in countries]]
        return picked[:, lo:hi + 1].astype(float)

    conf = rows_for(confirmed)
    dea = rows_for(deaths)
    rec = rows_for(recovered)

    active = conf - dea - rec
    deaths_daily = _daily_from_cumulative(dea, "deaths", warnings)
    recovered_daily = _daily_from_cumulative(rec, "recoveries", warnings)

    # First table providing a value for (country, feature) wins; a feature
    # missing for any retained country drops entirely (no imputation).
    static_names: list[str] = []
    static_cols: list[np.ndarray] = []
    for name in STATIC_FEATURES:
        column = np.full(len(countries), np.nan)
        for table in statics:
            if name not in table.feature_names:
                continue
            col = table.feature_names.index(name)
            index = {c: i for i, c in enumerate(table.countries)}
            for ci, country in enumerate(countries):
                if np.isnan(column[ci]):
                    column[ci] = table.values[index[country], col]
        if not statics or np.isnan(column).all():
            continue
        if np.isnan(column).any():
            missing = [countries[i] for i in np.flatnonzero(np.isnan(column))]
            warnings.append(
                f"dropped static feature {name!r}: missing for " + ", ".join(missing))
            continue
        static_names.append(name)
        static_cols.append(column)

    statics_matrix = (np.column_stack(static_cols) if static_cols
                      else np.zeros((len(countries), 0)))
    for message in warnings:
        log.warning("%s", message)
    return Panel(
        countries=countries,
        dates=tuple(dates),
        active=active,
        deaths_daily=deaths_daily,
        recovered_daily=recovered_daily,
        static_names=tuple(static_names),
        statics=statics_matrix,
        warnings=tuple(warnings),
    )


def _index_of_date(dates: list[str], value: str) -> int:
    try:
        return dates.index(value)
    except ValueError:
        raise ValueError(f"date {value} not on the shared date axis") from None


# ---------------------------------------------------------------------------
# panel export / reload
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def country_slug(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return slug or "country"


def export_panel(panel: Panel, outdir) -> None:
    """Write one per-country CSV (date,active,deaths_daily,recovered_daily)
    plus statics.csv.  Round-trip stable with :func:`load_panel`."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    slugs = [country_slug(c) for c in panel.countries]
    if len(set(slugs)) != len(slugs):
        raise ValueError("country names collide after slugging")
    for ci, country in enumerate(panel.countries):
        lines = ["date,active,deaths_daily,recovered_daily"]
        for t, day in enumerate(panel.dates):
            lines.append(",".join((
                day,
                _fmt(panel.active[ci, t]),
                _fmt(panel.deaths_daily[ci, t]),
                _fmt(panel.recovered_daily[ci, t]),
            )))
        (outdir / f"{slugs[ci]}.csv").write_text("\n".join(lines) + "\n")
    lines = ["Country," + ",".join(panel.static_names)]
    for ci, country in enumerate(panel.countries):
        cells = [country] + [_fmt(v) for v in panel.statics[ci]]
        lines.append(",".join(cells))
    (outdir / "statics.csv").write_text("\n".join(lines) + "\n")


def load_panel(directory) -> Panel:
    """Reload a panel written by :func:`export_panel`."""
    directory = Path(directory)
    statics = load_static_csv(directory / "statics.csv")
    countries = statics.countries
    dates: tuple[str, ...] | None = None
    active, deaths_daily, recovered_daily = [], [], []
    for country in countries:
        path = directory / f"{country_slug(country)}.csv"
        rows = _read_rows(path)
        if rows[0] != ["date", "active", "deaths_daily", "recovered_daily"]:
            raise MalformedCsv(f"{path}: unexpected header")
        file_dates = tuple(row[0] for row in rows[1:])
        if dates is None:
            dates = file_dates
        elif dates != file_dates:
            raise SeriesLengthMismatch(f"{path}: date axis differs")
        active.append([float(row[1]) for row in rows[1:]])
        deaths_daily.append([float(row[2]) for row in rows[1:]])
        recovered_daily.append([float(row[3]) for row in rows[1:]])
    if dates is None:
        raise MalformedCsv(f"{directory}: no countries found")
    return Panel(
        countries=countries,
        dates=dates,
        active=np.array(active),
        deaths_daily=np.array(deaths_daily),
        recovered_daily=np.array(recovered_daily),
        static_names=statics.feature_names,
        statics=statics.values.copy(),
    )


def export_series_csvs(panel: Panel, outdir) -> dict[str, Path]:
    """Reconstruct the three cumulative input CSVs (plus statics.csv) from a
    panel, in the exact format :func:`load_timeseries_csv` ingests.

    Requires integral series (true for count data); feeding the files back
    through the loaders and :func:`merge_and_clean` reproduces the panel
    bit-exactly.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    deaths_cum = np.cumsum(panel.deaths_daily, axis=1)
    recovered_cum = np.cumsum(panel.recovered_daily, axis=1)
    confirmed_cum = panel.active + deaths_cum + recovered_cum
    tables = {
        "confirmed.csv": confirmed_cum,
        "deaths.csv": deaths_cum,
        "recovered.csv": recovered_cum,
    }
    paths = {}
    for filename, matrix in tables.items():
        if not np.all(matrix == np.round(matrix)):
            raise ValueError(f"{filename}: panel series are not integral")
        lines = ["Country," + ",".join(panel.dates)]
        for ci, country in enumerate(panel.countries):
            lines.append(country + "," + ",".join(_fmt(v) for v in matrix[ci]))
        path = outdir / filename
        path.write_text("\n".join(lines) + "\n")
        paths[filename] = path
    lines = ["Country," + ",".join(panel.static_names)]
    for ci, country in enumerate(panel.countries):
        lines.append(",".join([country] + [_fmt(v) for v in panel.statics[ci]]))
    statics_path = outdir / "statics.csv"
    statics_path.write_text("\n".join(lines) + "\n")
    paths["statics.csv"] = statics_path
    return paths
