"""Flat feature space over a panel, per-horizon targets, and scaling.

Feature index layout (the stable contract every selection mask refers to):
indices ``[0, 3W)`` are temporal lags in series-major order -- ``active``
lags 0..W-1, then ``deaths_daily``, then ``recovered_daily``, where lag j
reads day t-j from the anchor day t -- and indices ``[3W, 3W+S)`` are the
panel's static features in panel column order.  W defaults to 14 days,
which with three series and 36 statics gives the 78-feature space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import EmptyTrainingSet, SeriesTooShort
from .ingest import Panel

log = logging.getLogger(__name__)

TEMPORAL_SERIES = ("active", "deaths_daily", "recovered_daily")

DEFAULT_WINDOW = 14


@dataclass(frozen=True)
class FeatureSpec:
    """Maps stable feature indices to what they read."""

    window: int
    static_names: tuple[str, ...]

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def n_temporal(self) -> int:
        return len(TEMPORAL_SERIES) * self.window

    @property
    def n_features(self) -> int:
        return self.n_temporal + len(self.static_names)

    def temporal_index(self, series: str, lag: int) -> int:
        if not 0 <= lag < self.window:
            raise ValueError(f"lag {lag} outside 0..{self.window - 1}")
        return TEMPORAL_SERIES.index(series) * self.window + lag

    def descriptor(self, index: int):
        """('lag', series, lag) for temporal indices, ('static', name) otherwise."""
        if not 0 <= index < self.n_features:
            raise IndexError(index)
        if index < self.n_temporal:
            series = TEMPORAL_SERIES[index // self.window]
            return ("lag", series, index % self.window)
        return ("static", self.static_names[index - self.n_temporal])

    def label(self, index: int) -> str:
        kind = self.descriptor(index)
        if kind[0] == "lag":
            return f"{kind[1]}[t-{kind[2]}]"
        return kind[1]

    def labels(self) -> tuple[str, ...]:
        return tuple(self.label(i) for i in range(self.n_features))


@dataclass
class SampleSet:
    """Pooled design matrix with one target vector per forecast horizon.

    Rows are ordered country-lexicographically, then by anchor date.  ``X``
    holds raw (unscaled) panel values; standardization is a separate,
    train-fold-only step via :class:`Scaler`.
    """

    X: np.ndarray                    # (L, n_features)
    targets: dict[int, np.ndarray]   # horizon k -> (L,)
    row_country: tuple[str, ...]
    row_anchor: tuple[str, ...]      # ISO anchor dates
    feature_spec: FeatureSpec

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def horizons(self) -> tuple[int, ...]:
        return tuple(sorted(self.targets))

    def subset(self, rows) -> "SampleSet":
        """Restrict to the given row indices (used by leakage-safe modes)."""
        rows = np.asarray(rows, dtype=int)
        return SampleSet(
            X=self.X[rows],
            targets={k: y[rows] for k, y in self.targets.items()},
            row_country=tuple(self.row_country[i] for i in rows),
            row_anchor=tuple(self.row_anchor[i] for i in rows),
            feature_spec=self.feature_spec,
        )


def build_samples(panel: Panel, k_max: int, window: int = DEFAULT_WINDOW) -> SampleSet:
    """Pool every country's valid forecast windows into one SampleSet.

    A country with T days contributes max(0, T - (window-1) - k_max) rows,
    anchored at t in [window-1, T-1-k_max]; features read days <= anchor,
    target k reads day anchor+k.  Countries too short to contribute are
    dropped with a warning; :class:`SeriesTooShort` is raised only when all
    of them drop.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    spec = FeatureSpec(window=window, static_names=panel.static_names)
    series_arrays = {
        "active": panel.active,
        "deaths_daily": panel.deaths_daily,
        "recovered_daily": panel.recovered_daily,
    }
    T = panel.n_days
    n_anchors = T - (window - 1) - k_max

    blocks: list[np.ndarray] = []
    target_blocks: dict[int, list[np.ndarray]] = {k: [] for k in range(1, k_max + 1)}
    row_country: list[str] = []
    row_anchor: list[str] = []
    for ci, country in enumerate(panel.countries):
        if n_anchors <= 0:
            log.warning("dropping %s: %d days < window %d + horizon %d",
                        country, T, window, k_max)
            continue
        anchors = np.arange(window - 1, T - k_max)
        X = np.empty((n_anchors, spec.n_features))
        for si, name in enumerate(TEMPORAL_SERIES):
            row = series_arrays[name][ci]
            for lag in range(window):
                X[:, si * window + lag] = row[anchors - lag]
        X[:, spec.n_temporal:] = panel.statics[ci]
        blocks.append(X)
        for k in range(1, k_max + 1):
            target_blocks[k].append(panel.active[ci, anchors + k])
        row_country.extend([country] * n_anchors)
        base = date.fromisoformat(panel.dates[0])
        row_anchor.extend((base + timedelta(days=int(t))).isoformat() for t in anchors)
    if not blocks:
        raise SeriesTooShort(
            f"no country has the {window + k_max} days needed for k_max={k_max}")
    return SampleSet(
        X=np.vstack(blocks),
        targets={k: np.concatenate(v) for k, v in target_blocks.items()},
        row_country=tuple(row_country),
        row_anchor=tuple(row_anchor),
        feature_spec=spec,
    )


# ---------------------------------------------------------------------------
# scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    """Per-feature and per-horizon-target standardization parameters.

    Fitted on training rows only.  Standard deviations use the n-1
    denominator; constant columns store sd = 1 so they standardize to 0
    instead of dividing by zero.
    """

    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: dict[int, float]
    y_sd: dict[int, float]


def fit_scaler(samples: SampleSet, train_rows) -> Scaler:
    """Means and standard deviations over the training rows only."""
    train_rows = np.asarray(train_rows, dtype=int)
    if train_rows.size == 0:
        raise EmptyTrainingSet("cannot fit a scaler on zero rows")
    X = samples.X[train_rows]
    x_mean = X.mean(axis=0)
    if train_rows.size < 2:
        x_sd = np.ones(X.shape[1])
    else:
        x_sd = X.std(axis=0, ddof=1)
        x_sd = np.where(x_sd == 0.0, 1.0, x_sd)
    y_mean: dict[int, float] = {}
    y_sd: dict[int, float] = {}
    for k, y in samples.targets.items():
        yk = y[train_rows]
        y_mean[k] = float(yk.mean())
        sd = float(yk.std(ddof=1)) if train_rows.size >= 2 else 0.0
        y_sd[k] = sd if sd > 0.0 else 1.0
    return Scaler(x_mean=x_mean, x_sd=x_sd, y_mean=y_mean, y_sd=y_sd)


def transform(samples: SampleSet, scaler: Scaler, rows=None) -> np.ndarray:
    """Standardized feature matrix for the given rows (all rows by default)."""
    X = samples.X if rows is None else samples.X[np.asarray(rows, dtype=int)]
    return (X - scaler.x_mean) / scaler.x_sd


def transform_target(scaler: Scaler, k: int, values) -> np.ndarray:
    return (np.asarray(values, dtype=float) - scaler.y_mean[k]) / scaler.y_sd[k]


def inverse_target(scaler: Scaler, k: int, values) -> np.ndarray:
    """Undo :func:`transform_target`; round-trips to ~1e-12 relative."""
    return np.asarray(values, dtype=float) * scaler.y_sd[k] + scaler.y_mean[k]


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def export_samples_csv(samples: SampleSet, path) -> None:
    """Debug dump: ``country,anchor_date,f0..f{n-1},y1..yK`` with the column
    order fixed by the feature spec."""
    spec = samples.feature_spec
    horizons = samples.horizons
    header = (["country", "anchor_date"]
              + [f"f{i}" for i in range(spec.n_features)]
              + [f"y{k}" for k in horizons])
    lines = [",".join(header)]
    for s in range(samples.n_rows):
        cells = [samples.row_country[s], samples.row_anchor[s]]
        cells += [repr(float(v)) for v in samples.X[s]]
        cells += [repr(float(samples.targets[k][s])) for k in horizons]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
