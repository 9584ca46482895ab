"""Command-line entry points and report / plot-data emission.

Commands: ``ingest``, ``heatmap``, ``sweep``, ``trace``, ``report``.  Every
configuration key can come from a ``key = value`` config file (``--config``)
or a flag; flags win.  All outputs are plain delimited text or JSON, fully
determined by (inputs, config, seed), so re-running a command over identical
inputs reproduces identical bytes.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime or
training error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, build_config, load_config_file,
                     parse_k_set)
from .errors import (ActivecastError, AllCellsFailed, DegenerateTarget,
                     EmptyIntersection, EmptyTrainingSet, GapInDates,
                     InsufficientHistory, MalformedCsv, MissingCells,
                     NegativeCumulative, NonFiniteLoss, SeriesLengthMismatch,
                     SeriesTooShort, UnknownCountry, UnmappableHeader)
from .featsel import METHODS
from .harness import (METHOD_ORDER, MODEL_ORDER, cell_filename, country_trace,
                      load_sweep, run_sweep)
from .ingest import (Panel, country_slug, export_panel, load_panel,
                     load_static_csv, load_timeseries_csv, merge_and_clean)
from .models import ForecasterConfig
from .numerics import correlation_matrix
from .samples import build_samples

log = logging.getLogger(__name__)

_DATA_ERRORS = (MalformedCsv, GapInDates, NegativeCumulative, UnmappableHeader,
                EmptyIntersection, SeriesLengthMismatch, SeriesTooShort,
                UnknownCountry, InsufficientHistory, MissingCells,
                FileNotFoundError)
_RUNTIME_ERRORS = (DegenerateTarget, NonFiniteLoss, AllCellsFailed,
                   EmptyTrainingSet)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--confirmed", help="cumulative confirmed-cases CSV")
    parser.add_argument("--deaths", help="cumulative deaths CSV")
    parser.add_argument("--recovered", help="cumulative recoveries CSV")
    parser.add_argument("--statics", action="append",
                        help="static-features CSV (repeatable)")
    parser.add_argument("--start-date", dest="start_date")
    parser.add_argument("--end-date", dest="end_date")
    parser.add_argument("--k-set", dest="k_set", type=parse_k_set,
                        help="horizons, e.g. '1,3,5' or '1..30'")
    parser.add_argument("--models", type=lambda s: tuple(s.split(",")))
    parser.add_argument("--methods", type=lambda s: tuple(s.split(",")))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=("paper", "strict_nested"))
    parser.add_argument("--fast", action=argparse.BooleanOptionalAction)
    parser.add_argument("--out")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--window", type=int)
    parser.add_argument("--group-by-country", dest="group_by_country",
                        action=argparse.BooleanOptionalAction)
    parser.add_argument("--surrogate-lr", dest="surrogate_lr",
                        action=argparse.BooleanOptionalAction)
    parser.add_argument("--statics-only", dest="statics_only",
                        action=argparse.BooleanOptionalAction)
    parser.add_argument("--standardize-lr", dest="standardize_lr",
                        action=argparse.BooleanOptionalAction)
    parser.add_argument("--n-reps", dest="n_reps", type=int)
    parser.add_argument("--grid-reps", dest="grid_reps", type=int)
    parser.add_argument("--sel-reps", dest="sel_reps", type=int)
    parser.add_argument("--max-epochs", dest="max_epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("-v", "--verbose", action="store_true")


_CONFIG_KEYS = ("confirmed", "deaths", "recovered", "statics", "start_date",
                "end_date", "k_set", "models", "methods", "seed", "mode",
                "fast", "out", "workers", "window", "group_by_country",
                "surrogate_lr", "statics_only", "standardize_lr", "n_reps",
                "grid_reps", "sel_reps", "max_epochs", "batch_size",
                "patience")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    flag_values = {}
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "statics":
            value = tuple(value)
        flag_values[key] = value
    return build_config(file_values, flag_values)


def build_parser() -> _Parser:
    parser = _Parser(prog="activecast",
                     description="Feature-selection x forecaster x horizon "
                                 "benchmark for active-case forecasting")
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True,
                                     parser_class=_Parser)
    for name, helptext in (
            ("ingest", "merge input CSVs into a clean panel"),
            ("heatmap", "emit the feature correlation matrix"),
            ("sweep", "run the full experiment grid"),
            ("trace", "emit a country's concatenated forecast trace"),
            ("report", "consolidate cell results into one summary")):
        sub = commands.add_parser(name, help=helptext)
        _add_common_flags(sub)
        if name == "trace":
            sub.add_argument("--country", required=True)
            sub.add_argument("--k", type=int, required=True)
            sub.add_argument("--method", choices=METHODS,
                             help="selection method for every model "
                                  "(default: best from the sweep)")
    return parser


# ---------------------------------------------------------------------------
# panel acquisition
# ---------------------------------------------------------------------------

def _ingest_panel(cfg: RunConfig) -> Panel:
    for name in ("confirmed", "deaths", "recovered"):
        path = getattr(cfg, name)
        if path is None:
            raise ConfigError(f"missing input: --{name} (or '{name}' in the config file)")
        if not Path(path).exists():
            raise FileNotFoundError(f"{name} file not found: {path}")
    for path in cfg.statics:
        if not Path(path).exists():
            raise FileNotFoundError(f"statics file not found: {path}")
    confirmed = load_timeseries_csv(cfg.confirmed, "total-confirmed")
    deaths = load_timeseries_csv(cfg.deaths, "total-deaths")
    recovered = load_timeseries_csv(cfg.recovered, "total-recovered")
    statics = [load_static_csv(path) for path in cfg.statics]
    return merge_and_clean(confirmed, deaths, recovered, statics,
                           start_date=cfg.start_date, end_date=cfg.end_date)


def _acquire_panel(cfg: RunConfig) -> Panel:
    """Ingest from the configured CSVs, or fall back to a previously
    exported panel under <out>/panel."""
    if cfg.confirmed or cfg.deaths or cfg.recovered:
        return _ingest_panel(cfg)
    panel_dir = Path(cfg.out) / "panel"
    if (panel_dir / "statics.csv").exists():
        return load_panel(panel_dir)
    raise MissingCells(
        f"no panel available: pass the input CSVs or run 'activecast ingest' "
        f"into {cfg.out} first")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(cfg: RunConfig) -> int:
    panel = _ingest_panel(cfg)
    outdir = Path(cfg.out)
    export_panel(panel, outdir / "panel")
    report = {
        "countries": list(panel.countries),
        "n_countries": len(panel.countries),
        "date_range": [panel.dates[0], panel.dates[-1]],
        "n_days": panel.n_days,
        "static_features": list(panel.static_names),
        "n_static_features": len(panel.static_names),
        "warnings": list(panel.warnings),
    }
    (outdir / "ingest_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n")
    print(f"panel: {len(panel.countries)} countries x {panel.n_days} days, "
          f"{len(panel.static_names)} static features -> {outdir / 'panel'}")
    return 0


def cmd_heatmap(cfg: RunConfig) -> int:
    panel = _acquire_panel(cfg)
    if cfg.statics_only:
        matrix = correlation_matrix(panel.statics)
        labels = list(panel.static_names)
    else:
        samples = build_samples(panel, 1, cfg.window)
        matrix = correlation_matrix(samples.X)
        labels = list(samples.feature_spec.labels())
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = ["feature," + ",".join(labels)]
    for i, label in enumerate(labels):
        lines.append(label + "," + ",".join(_fmt(v) for v in matrix[i]))
    path = outdir / ("heatmap_statics.csv" if cfg.statics_only else "heatmap.csv")
    path.write_text("\n".join(lines) + "\n")
    print(f"heatmap: {len(labels)}x{len(labels)} -> {path}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    panel = _acquire_panel(cfg)
    result = run_sweep(panel, cfg)
    _write_plot_data(result, Path(cfg.out) / "plots")
    n = len(result.cells)
    print(f"sweep: {n} cells -> {Path(cfg.out) / 'results'}")
    return 0


def _write_plot_data(result, plots_dir: Path) -> None:
    """Plot-ready delimited text: per-(model, method) score curves over K,
    per-model best-method comparison, and selected-feature counts."""
    plots_dir.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    k_set = cfg.effective_k_set
    models = sorted(set(cfg.models), key=MODEL_ORDER.index)
    methods = sorted(set(cfg.methods), key=METHOD_ORDER.index)

    def cell(model, method, k):
        return result.cells.get((model, method, k))

    for model in models:
        for method in methods:
            lines = ["K,train_mean,train_std,test_mean,test_std"]
            for k in k_set:
                c = cell(model, method, k)
                if c is None:
                    continue
                r = c["report"]
                lines.append(",".join([str(k)] + [
                    "" if r[f] is None else _fmt(r[f])
                    for f in ("train_mean", "train_std", "test_mean", "test_std")]))
            (plots_dir / f"curve_{model}_{method}.csv").write_text(
                "\n".join(lines) + "\n")

    for model in models:
        lines = ["K,method,test_mean,test_std"]
        for k in k_set:
            method = result.best.get((model, k))
            if method is None:
                continue
            r = cell(model, method, k)["report"]
            lines.append(",".join([str(k), method, _fmt(r["test_mean"]),
                                   _fmt(r["test_std"])]))
        (plots_dir / f"best_{model}.csv").write_text("\n".join(lines) + "\n")

    for model in models:
        for method in methods:
            if method == "NoFS":
                continue
            lines = ["K,n_selected"]
            for k in k_set:
                c = cell(model, method, k)
                if c is None or c.get("mask") is None:
                    continue
                lines.append(f"{k},{len(c['mask']['indices'])}")
            (plots_dir / f"featcount_{model}_{method}.csv").write_text(
                "\n".join(lines) + "\n")


def cmd_trace(cfg: RunConfig, country: str, k: int,
              method: str | None) -> int:
    panel = _acquire_panel(cfg)
    try:
        sweep = load_sweep(cfg)
    except MissingCells:
        sweep = None
    if method is None and sweep is None:
        raise MissingCells("no sweep results found; pass --method or run "
                           "'activecast sweep' first")

    models = sorted(set(cfg.models), key=MODEL_ORDER.index)
    traces = {}
    for model in models:
        model_method = method
        architecture = None
        if model_method is None:
            model_method = sweep.best.get((model, k))
            if model_method is None:
                raise MissingCells(
                    f"no best method recorded for {model} at K={k}; "
                    f"pass --method")
        if sweep is not None:
            c = sweep.cells.get((model, model_method, k))
            if c is not None and c.get("architecture"):
                architecture = ForecasterConfig.from_dict(c["architecture"])
        traces[model] = country_trace(panel, country, model, model_method, k,
                                      cfg, architecture=architecture)

    first = traces[models[0]]
    lines = ["date,truth," + ",".join(models)]
    for i, day in enumerate(first.dates):
        cells = [day, _fmt(first.truth[i])]
        cells += [_fmt(traces[m].predictions[i]) for m in models]
        lines.append(",".join(cells))
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"trace_{country_slug(country)}_K{k:02d}.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"trace: {country} K={k} ({len(first.dates)} days) -> {path}")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    sweep = load_sweep(cfg)
    outdir = Path(cfg.out)
    cells = {}
    for (model, method, k), cell in sorted(
            sweep.cells.items(),
            key=lambda kv: (MODEL_ORDER.index(kv[0][0]),
                            METHOD_ORDER.index(kv[0][1]), kv[0][2])):
        cells[cell_filename(model, method, k).removesuffix(".json")] = {
            "train_mean": cell["report"]["train_mean"],
            "train_std": cell["report"]["train_std"],
            "test_mean": cell["report"]["test_mean"],
            "test_std": cell["report"]["test_std"],
            "n_valid": cell["report"]["n_valid"],
            "valid": cell["valid"],
            "architecture": cell["architecture"],
            "n_selected": (len(cell["mask"]["indices"])
                           if cell.get("mask") else None),
            "seeds": cell["report"]["seeds"],
        }
    report = {
        "format_version": 1,
        "package_version": __version__,
        "config": sweep.config.snapshot_dict(),
        "config_hash": sweep.config.snapshot_hash(),
        "n_cells": len(sweep.cells),
        "cells": cells,
        "best_method": {f"{model}_K{k:02d}": method
                        for (model, k), method in sorted(sweep.best.items())},
    }
    (outdir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n")
    (outdir / "report.txt").write_text(_report_tables(sweep))
    print(f"report: {len(sweep.cells)} cells -> {outdir / 'report.json'}")
    return 0


def _report_tables(sweep) -> str:
    models = sorted({key[0] for key in sweep.cells}, key=MODEL_ORDER.index)
    methods = sorted({key[1] for key in sweep.cells}, key=METHOD_ORDER.index)
    ks = sorted({key[2] for key in sweep.cells})
    out = []
    for model in models:
        out.append(f"== {model}: mean test r2 by method ==")
        out.append("K".rjust(4) + "".join(m.rjust(12) for m in methods) +
                   "best".rjust(12))
        for k in ks:
            row = [str(k).rjust(4)]
            for method in methods:
                cell = sweep.cells.get((model, method, k))
                value = cell["report"]["test_mean"] if cell else None
                row.append(("-" if value is None else f"{value:.4f}").rjust(12))
            row.append(str(sweep.best.get((model, k), "-")).rjust(12))
            out.append("".join(row))
        out.append("")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "heatmap":
            return cmd_heatmap(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "trace":
            return cmd_trace(cfg, args.country, args.k, args.method)
        if args.command == "report":
            return cmd_report(cfg)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    except ActivecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
