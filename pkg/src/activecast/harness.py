"""The experiment grid: (model x selection method x horizon) cells under
Monte-Carlo CV, best-method extraction, and per-country forecast traces.

Every cell is an independent deterministic task keyed by (model, method, K):
its masks, architecture search, and CV splits all derive their seeds from
the global seed plus the key, so cells can run on any number of workers in
any order and always produce identical bytes.  Results live as one JSON
document per cell in ``<out>/results``; completed keys are skipped on
re-runs (idempotent, resumable).

In ``paper`` mode selection masks are computed once on the full sample set
before the outer CV and the architecture grid is scored with the same CV
protocol -- faithful to the procedure the experiment models, but it leaks
test information into those choices.  ``strict_nested`` mode recomputes the
mask inside each repetition from training rows only and carves a validation
split out of the training rows for the architecture choice.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .config import RunConfig
from .cv import CvReport, mc_cv
from .errors import (AllCellsFailed, InsufficientHistory, MissingCells,
                     UnknownCountry)
from .featsel import (SelectionMask, lasso_select, no_fs, pcorr_select,
                      rfs_select)
from .ingest import Panel
from .models import (ForecasterConfig, grid_search, fit, predict)
from .samples import (SampleSet, build_samples, fit_scaler, inverse_target,
                      transform, transform_target)
from .seeding import derive_seed

log = logging.getLogger(__name__)

MODEL_ORDER = ("LR", "MLP", "LSTM")
METHOD_ORDER = ("NoFS", "PCorr", "RFS", "Lasso")

CELL_FORMAT_VERSION = 1


def cell_filename(model: str, method: str, k: int) -> str:
    return f"{model}_{method}_K{k:02d}.json"


def enumerate_cells(cfg: RunConfig) -> list[tuple[str, str, int]]:
    """All (model, method, K) keys in deterministic order."""
    models = sorted(set(cfg.models), key=MODEL_ORDER.index)
    methods = sorted(set(cfg.methods), key=METHOD_ORDER.index)
    return [(model, method, k)
            for model in models for method in methods
            for k in cfg.effective_k_set]


# ---------------------------------------------------------------------------
# per-cell building blocks
# ---------------------------------------------------------------------------

def base_config(model: str, cfg: RunConfig) -> ForecasterConfig:
    """Default architecture with the run's training knobs; grid search
    replaces the sizes for MLP/LSTM."""
    return ForecasterConfig(
        kind=model,
        batch_size=cfg.batch_size,
        max_epochs=cfg.effective_max_epochs,
        patience=cfg.patience,
    )


def _selection_scorer(samples: SampleSet, model: str, method: str, k: int,
                      cfg: RunConfig, seed: int):
    """Mask -> mean CV test r2 hook for the threshold / prefix searches.

    Scores with the downstream forecaster kind at the default architecture;
    with ``surrogate_lr`` on, MLP/LSTM searches score with LR instead to cut
    cost.  All candidates share the same CV splits (paired comparison).
    """
    kind = "LR" if (cfg.effective_surrogate_lr and model != "LR") else model
    sel_config = base_config(kind, cfg)

    def score(mask: SelectionMask) -> float:
        report = mc_cv(samples, mask, sel_config, k,
                       n_reps=cfg.effective_sel_reps, seed=seed,
                       group_by_country=cfg.group_by_country,
                       standardize_lr=cfg.standardize_lr)
        return report.test_mean

    return score


def compute_mask(samples: SampleSet, model: str, method: str, k: int,
                 cfg: RunConfig) -> SelectionMask:
    """The cell's selection mask (over whatever sample set is passed in)."""
    if method == "NoFS":
        return no_fs(samples.feature_spec)
    if method == "PCorr":
        seed = derive_seed(cfg.seed, "sel", "PCorr", model, k)
        return pcorr_select(samples, _selection_scorer(samples, model, method,
                                                       k, cfg, seed))
    if method == "RFS":
        seed = derive_seed(cfg.seed, "sel", "RFS", model, k)
        return rfs_select(samples, k, _selection_scorer(samples, model, method,
                                                        k, cfg, seed))
    if method == "Lasso":
        # Deliberately model-independent: one mask per horizon.
        return lasso_select(samples, k, derive_seed(cfg.seed, "lasso", k))
    raise ValueError(f"unknown method {method!r}")


def _grid_evaluate(samples: SampleSet, mask: SelectionMask, k: int,
                   cfg: RunConfig, seed: int):
    def evaluate(candidate: ForecasterConfig) -> float:
        report = mc_cv(samples, mask, candidate, k,
                       n_reps=cfg.effective_grid_reps, seed=seed,
                       group_by_country=cfg.group_by_country,
                       standardize_lr=cfg.standardize_lr)
        return report.test_mean

    return evaluate


def _choose_architecture(samples: SampleSet, mask: SelectionMask, model: str,
                         k: int, cfg: RunConfig,
                         seed: int) -> tuple[ForecasterConfig, dict | None]:
    if model == "LR":
        return base_config("LR", cfg), None
    evaluate = _grid_evaluate(samples, mask, k, cfg, seed)
    best, scores = grid_search(model, mask, samples.feature_spec, evaluate,
                               base=base_config(model, cfg), fast=cfg.fast)
    return best, scores


def _nested_config_builder(model: str, k: int, cfg: RunConfig):
    """Architecture choice from a validation carve of the training rows."""
    if model == "LR":
        return None

    def builder(train_samples: SampleSet, mask: SelectionMask,
                seed: int) -> ForecasterConfig:
        def evaluate(candidate: ForecasterConfig) -> float:
            report = mc_cv(train_samples, mask, candidate, k, n_reps=1,
                           seed=seed, group_by_country=cfg.group_by_country,
                           standardize_lr=cfg.standardize_lr)
            return report.test_mean

        best, _ = grid_search(model, mask, train_samples.feature_spec,
                              evaluate, base=base_config(model, cfg),
                              fast=cfg.fast)
        return best

    return builder


def _mask_dict(mask: SelectionMask) -> dict:
    return {
        "indices": list(mask.indices),
        "method": mask.method,
        "metadata": _sanitize(mask.metadata),
    }


def _sanitize(value):
    """Make metadata JSON-safe and deterministic (NaN -> None)."""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def run_cell(samples: SampleSet, model: str, method: str, k: int,
             cfg: RunConfig) -> dict:
    """One (model, method, K) cell, start to finish, as a JSON-ready dict."""
    if cfg.mode == "strict_nested":
        mask_builder = None
        if method != "NoFS":
            def mask_builder(train_samples, seed):
                nested = replace(cfg, seed=seed)
                return compute_mask(train_samples, model, method, k, nested)

        report, details = mc_cv(
            samples, no_fs(samples.feature_spec), base_config(model, cfg), k,
            n_reps=cfg.n_reps, seed=derive_seed(cfg.seed, "cv", model, method, k),
            group_by_country=cfg.group_by_country,
            standardize_lr=cfg.standardize_lr,
            mask_builder=mask_builder,
            config_builder=_nested_config_builder(model, k, cfg),
            collect_details=True)
        masks = [_mask_dict(d.mask) for d in details]
        architecture = details[0].config.to_dict() if details else None
        cell_mask: dict | None = None
        grid_scores = None
    else:
        mask = compute_mask(samples, model, method, k, cfg)
        architecture_cfg, grid_scores = _choose_architecture(
            samples, mask, model, k, cfg,
            derive_seed(cfg.seed, "grid", model, method, k))
        report = mc_cv(samples, mask, architecture_cfg, k, n_reps=cfg.n_reps,
                       seed=derive_seed(cfg.seed, "cv", model, method, k),
                       group_by_country=cfg.group_by_country,
                       standardize_lr=cfg.standardize_lr)
        masks = None
        cell_mask = _mask_dict(mask)
        architecture = architecture_cfg.to_dict()

    n_failures = report.n_reps - report.n_valid
    return {
        "format_version": CELL_FORMAT_VERSION,
        "model": model,
        "method": method,
        "k": k,
        "config_hash": cfg.snapshot_hash(),
        "mask": cell_mask,
        "masks_per_rep": masks,
        "architecture": architecture,
        "grid_scores": _sanitize(grid_scores) if grid_scores else None,
        "report": report.to_dict(),
        "valid": bool(report.n_valid >= 1 and n_failures <= report.n_reps // 2),
    }


# ---------------------------------------------------------------------------
# the sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Grid of cell documents plus the per-(model, K) best method."""

    cells: dict[tuple[str, str, int], dict]
    best: dict[tuple[str, int], str]
    config: RunConfig

    def report(self, model: str, method: str, k: int) -> CvReport:
        return CvReport.from_dict(self.cells[(model, method, k)]["report"])


def _cell_bytes(cell: dict) -> str:
    return json.dumps(cell, sort_keys=True) + "\n"


def _cell_worker(args) -> tuple[tuple[str, str, int], dict]:
    samples, model, method, k, cfg = args
    return (model, method, k), run_cell(samples, model, method, k, cfg)


def run_sweep(panel: Panel, cfg: RunConfig) -> SweepResult:
    """Run (or resume) the full grid and persist one JSON file per cell."""
    k_set = cfg.effective_k_set
    samples = build_samples(panel, max(k_set), cfg.window)
    results_dir = Path(cfg.out) / "results"
    results_dir.mkdir(parents=True, exist_ok=True)

    keys = enumerate_cells(cfg)
    cells: dict[tuple[str, str, int], dict] = {}
    todo = []
    for key in keys:
        path = results_dir / cell_filename(*key)
        if path.exists():
            try:
                cell = json.loads(path.read_text())
            except json.JSONDecodeError:
                cell = None
            if cell and cell.get("config_hash") == cfg.snapshot_hash():
                cells[key] = cell
                continue
        todo.append(key)

    if todo:
        log.info("running %d of %d cells (%d reused)", len(todo), len(keys),
                 len(cells))
    if cfg.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            tasks = [(samples, model, method, k, cfg)
                     for model, method, k in todo]
            for key, cell in pool.map(_cell_worker, tasks):
                cells[key] = cell
                (results_dir / cell_filename(*key)).write_text(_cell_bytes(cell))
    else:
        for key in todo:
            cell = run_cell(samples, *key, cfg)
            cells[key] = cell
            (results_dir / cell_filename(*key)).write_text(_cell_bytes(cell))

    best: dict[tuple[str, int], str] = {}
    for model in sorted(set(cfg.models), key=MODEL_ORDER.index):
        for k in k_set:
            try:
                method, _ = _best_from_cells(cells, cfg.methods, model, k)
            except (MissingCells, AllCellsFailed):
                continue
            best[(model, k)] = method

    result = SweepResult(cells=cells, best=best, config=cfg)
    _write_summary(result, Path(cfg.out))
    return result


def _write_summary(result: SweepResult, outdir: Path) -> None:
    cfg = result.config
    summary = {
        "format_version": CELL_FORMAT_VERSION,
        "config": cfg.snapshot_dict(),
        "config_hash": cfg.snapshot_hash(),
        "cells": {
            f"{model}_{method}_K{k:02d}": {
                "train_mean": cell["report"]["train_mean"],
                "train_std": cell["report"]["train_std"],
                "test_mean": cell["report"]["test_mean"],
                "test_std": cell["report"]["test_std"],
                "n_valid": cell["report"]["n_valid"],
                "valid": cell["valid"],
            }
            for (model, method, k), cell in sorted(result.cells.items(),
                                                   key=_cell_sort_key)
        },
        "best_method": {
            f"{model}_K{k:02d}": method
            for (model, k), method in sorted(result.best.items(),
                                             key=lambda kv: (MODEL_ORDER.index(kv[0][0]), kv[0][1]))
        },
    }
    (outdir / "sweep_summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n")


def _cell_sort_key(item):
    (model, method, k), _ = item
    return (MODEL_ORDER.index(model), METHOD_ORDER.index(method), k)


def load_sweep(cfg: RunConfig) -> SweepResult:
    """Rebuild a SweepResult from the files in ``<out>/results``."""
    results_dir = Path(cfg.out) / "results"
    cells: dict[tuple[str, str, int], dict] = {}
    if results_dir.is_dir():
        for path in sorted(results_dir.glob("*.json")):
            cell = json.loads(path.read_text())
            cells[(cell["model"], cell["method"], cell["k"])] = cell
    if not cells:
        raise MissingCells(f"no cell results under {results_dir}")
    best: dict[tuple[str, int], str] = {}
    models = sorted({key[0] for key in cells}, key=MODEL_ORDER.index)
    ks = sorted({key[2] for key in cells})
    methods = tuple(sorted({key[1] for key in cells}, key=METHOD_ORDER.index))
    for model in models:
        for k in ks:
            try:
                method, _ = _best_from_cells(cells, methods, model, k)
            except (MissingCells, AllCellsFailed):
                continue
            best[(model, k)] = method
    return SweepResult(cells=cells, best=best, config=cfg)


def _best_from_cells(cells: dict, methods, model: str,
                     k: int) -> tuple[str, dict]:
    candidates = []
    for method in methods:
        key = (model, method, k)
        if key not in cells:
            raise MissingCells(f"cell {cell_filename(*key)} missing")
        candidates.append((method, cells[key]))
    best: tuple[str, dict] | None = None
    best_score = -np.inf
    for method, cell in candidates:  # METHOD_ORDER resolves ties (first wins)
        score = cell["report"]["test_mean"]
        if not cell["valid"] or score is None:
            continue
        if best is None or score > best_score:
            best = (method, cell)
            best_score = score
    if best is None:
        raise AllCellsFailed(f"every method failed for {model} at K={k}")
    return best


def best_method(result: SweepResult, model: str, k: int) -> tuple[str, CvReport]:
    """Best selection method for (model, K) by mean test r2; ties resolve in
    the order NoFS < PCorr < RFS < Lasso; all-failed methods are excluded."""
    methods = tuple(sorted(set(result.config.methods), key=METHOD_ORDER.index))
    method, cell = _best_from_cells(result.cells, methods, model, k)
    return method, CvReport.from_dict(cell["report"])


# ---------------------------------------------------------------------------
# per-country traces
# ---------------------------------------------------------------------------

@dataclass
class TraceResult:
    """K-step-ahead predictions concatenated over 1-day sliding windows.

    The value at ``dates[i]`` was predicted from the window ending at
    ``anchors[i]`` = dates[i] - K days, so the trace never peeks past its
    anchor.
    """

    country: str
    k: int
    model: str
    method: str
    dates: tuple[str, ...]
    anchors: tuple[str, ...]
    predictions: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        offset = timedelta(days=self.k)
        for anchor, day in zip(self.anchors, self.dates):
            if date.fromisoformat(anchor) + offset != date.fromisoformat(day):
                raise ValueError(f"trace alignment broken at {day}")


def country_trace(panel: Panel, country: str, model: str, method: str, k: int,
                  cfg: RunConfig,
                  architecture: ForecasterConfig | None = None,
                  mask: SelectionMask | None = None) -> TraceResult:
    """Train once on the pooled samples, then emit the country's K-step-ahead
    prediction for every anchor date it has."""
    if country not in panel.countries:
        raise UnknownCountry(country)
    if panel.n_days < cfg.window + k:
        raise InsufficientHistory(
            f"{country}: {panel.n_days} days < window {cfg.window} + K {k}")
    samples = build_samples(panel, k, cfg.window)
    rows = np.flatnonzero(np.array(samples.row_country) == country)
    if rows.size == 0:
        raise InsufficientHistory(f"{country} contributed no windows")

    if mask is None:
        mask = compute_mask(samples, model, method, k, cfg)
    if architecture is None:
        architecture, _ = _choose_architecture(
            samples, mask, model, k, cfg,
            derive_seed(cfg.seed, "grid", model, method, k))
    architecture = replace(architecture, seed=derive_seed(cfg.seed, "trace",
                                                          model, method, k))

    y = samples.targets[k]
    all_rows = np.arange(samples.n_rows)
    if architecture.kind == "LR" and not cfg.standardize_lr:
        Xm = samples.X[:, mask.indices]
        trained = fit(architecture, Xm, y, mask, samples.feature_spec)
        preds = predict(trained, Xm[rows])
    else:
        scaler = fit_scaler(samples, all_rows)
        Xs = transform(samples, scaler)[:, mask.indices]
        ys = transform_target(scaler, k, y)
        trained = fit(architecture, Xs, ys, mask, samples.feature_spec, scaler)
        preds = inverse_target(scaler, k, predict(trained, Xs[rows]))

    anchors = tuple(samples.row_anchor[i] for i in rows)
    offset = timedelta(days=k)
    dates = tuple((date.fromisoformat(a) + offset).isoformat() for a in anchors)
    return TraceResult(country=country, k=k, model=model, method=method,
                       dates=dates, anchors=anchors,
                       predictions=np.asarray(preds), truth=y[rows].copy())
