"""The four feature-selection strategies over the flat feature space.

* ``NoFS``   -- keep everything.
* ``PCorr``  -- iteratively eliminate one member of every feature pair whose
  absolute Pearson correlation exceeds a threshold p, searching p over
  0.50..0.99 in steps of 0.01 by downstream CV score.
* ``RFS``    -- rank features by the magnitude of standardized linear-model
  coefficients and keep the best-scoring prefix.
* ``Lasso``  -- take the nonzero support of the best l1-regularized linear
  model found across five random 80/20 folds and a geometric lambda path.

The downstream scoring hook is a plain callable ``score_mask(mask) -> float``
(mean CV test r2, NaN on failure) supplied by the harness, so this module
stays independent of the CV machinery.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import (LassoProblem, correlation_matrix, lasso_cd, lasso_gram,
                       lambda_path, least_squares, r2_score)
from .errors import ZeroVariance
from .samples import FeatureSpec, SampleSet
from .seeding import derive_seed

log = logging.getLogger(__name__)

METHODS = ("NoFS", "PCorr", "RFS", "Lasso")

# The exhaustive threshold grid for PCorr: 0.50, 0.51, ..., 0.99.
PCORR_GRID = tuple(round(0.50 + 0.01 * i, 2) for i in range(50))

LASSO_FOLDS = 5
LASSO_TRAIN_FRAC = 0.8


@dataclass(frozen=True)
class SelectionMask:
    """Ordered subset of feature indices plus how it was chosen."""

    indices: tuple[int, ...]
    method: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.indices:
            raise ValueError("a selection mask cannot be empty")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("mask indices must be strictly increasing")
        if self.indices[0] < 0:
            raise ValueError("mask indices must be non-negative")
        if self.method not in METHODS:
            raise ValueError(f"unknown selection method {self.method!r}")

    def __len__(self) -> int:
        return len(self.indices)


def no_fs(spec: FeatureSpec) -> SelectionMask:
    """The identity mask: all features."""
    return SelectionMask(indices=tuple(range(spec.n_features)), method="NoFS")


# ---------------------------------------------------------------------------
# pairwise-correlation elimination
# ---------------------------------------------------------------------------

def pcorr_eliminate(corr: np.ndarray, p: float) -> SelectionMask:
    """Eliminate one member of every feature pair with |rho| > p.

    Pairs (i, j), i < j, are visited in ascending order; when both members
    are still retained, the one with the greater mean absolute off-diagonal
    correlation to the currently retained features is dropped (ties drop the
    larger index).  The last member of any pair always survives, so the
    result is never empty.
    """
    if not 0.5 <= p <= 0.99:
        raise ValueError("threshold p must lie in [0.5, 0.99]")
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    retained = np.ones(n, dtype=bool)
    abs_corr = np.abs(corr)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if abs_corr[i, j] > p]
    for i, j in pairs:
        if not (retained[i] and retained[j]):
            continue

        def mean_to_retained(a: int) -> float:
            others = retained.copy()
            others[a] = False
            count = int(others.sum())
            return float(abs_corr[a, others].sum() / count) if count else 0.0

        mi, mj = mean_to_retained(i), mean_to_retained(j)
        drop = i if mi > mj else j
        retained[drop] = False
    assert retained.any(), "pairwise elimination can never empty the mask"
    return SelectionMask(indices=tuple(np.flatnonzero(retained).tolist()),
                         method="PCorr", metadata={"p": p})


def pcorr_select(samples: SampleSet, score_mask, p_grid=PCORR_GRID,
                 corr: np.ndarray | None = None) -> SelectionMask:
    """Exhaustive threshold search: the p whose eliminated feature set gives
    the best downstream CV score wins (score ties go to larger p, i.e. fewer
    eliminations).  Identical masks arising at different thresholds are
    scored once.  Thresholds whose cell fails (NaN score) are skipped.
    """
    if corr is None:
        corr = correlation_matrix(samples.X)
    cache: dict[tuple[int, ...], float] = {}
    best: tuple[float, float, SelectionMask] | None = None  # (score, p, mask)
    for p in p_grid:
        mask = pcorr_eliminate(corr, p)
        if mask.indices not in cache:
            cache[mask.indices] = score_mask(mask)
        score = cache[mask.indices]
        if score is None or not np.isfinite(score):
            continue
        if best is None or score > best[0] or (score == best[0] and p > best[1]):
            best = (score, p, mask)
    if best is None:
        raise ZeroVariance("every threshold cell failed to score")
    score, p, mask = best
    return SelectionMask(indices=mask.indices, method="PCorr",
                         metadata={"p": p, "score": score})


# ---------------------------------------------------------------------------
# recursive feature selection
# ---------------------------------------------------------------------------

def rfs_rank(X_std: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Feature ranking by descending |coefficient| of a linear fit on the
    standardized candidates; coefficient-magnitude ties rank the smaller
    index first.  Returns a permutation of 0..n-1."""
    w, _ = least_squares(X_std, y)
    order = np.lexsort((np.arange(len(w)), -np.abs(w)))
    return order


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
    sd = np.where(sd == 0.0, 1.0, sd)
    return (X - mean) / sd


def rfs_select(samples: SampleSet, k: int, score_mask) -> SelectionMask:
    """Search the prefix length N over the full coefficient ranking; the
    best-scoring N wins (ties go to the smaller N).  The returned metadata
    keeps the whole score list, one entry per candidate N."""
    X_std = _standardize_columns(samples.X)
    ranking = rfs_rank(X_std, samples.targets[k])
    n = len(ranking)
    scores: list[float] = []
    best: tuple[float, int, SelectionMask] | None = None
    for size in range(1, n + 1):
        indices = tuple(sorted(int(i) for i in ranking[:size]))
        mask = SelectionMask(indices=indices, method="RFS", metadata={"n": size})
        score = score_mask(mask)
        score = float("nan") if score is None else float(score)
        scores.append(score)
        if not np.isfinite(score):
            continue
        if best is None or score > best[0]:
            best = (score, size, mask)
    if best is None:
        raise ZeroVariance("every prefix cell failed to score")
    score, size, mask = best
    return SelectionMask(indices=mask.indices, method="RFS",
                         metadata={"n": size, "score": score, "scores": scores})


# ---------------------------------------------------------------------------
# Lasso selection
# ---------------------------------------------------------------------------

def lasso_select(samples: SampleSet, k: int, seed: int,
                 n_folds: int = LASSO_FOLDS, tol: float = 1e-4,
                 max_iter: int = 2000) -> SelectionMask:
    """Support of the best l1-regularized fit across random folds.

    Each fold is a seeded random 80/20 split; features are standardized and
    the target centered on the fold's training rows; the lambda path is
    swept with warm starts and scored on the fold's test rows.  The single
    (fold, lambda) model with the best test r2 provides the mask, shared by
    every forecaster kind.  If that model has no nonzero coefficient, the
    single feature most correlated with the target is kept and flagged.

    ``tol`` is looser than the solver's 1e-6 default: support selection only
    needs coefficient signs and rough magnitudes, and path sweeps over the
    strongly correlated lag features would otherwise crawl.
    """
    X = samples.X
    y = samples.targets[k]
    L = len(y)
    if L < 10:
        raise ValueError(f"lasso selection needs at least 10 rows, got {L}")
    best: tuple[float, int, float, np.ndarray] | None = None  # (r2, fold, lam, w)
    for fold in range(n_folds):
        rng = np.random.default_rng(derive_seed(seed, "fold", fold))
        order = rng.permutation(L)
        n_train = int(LASSO_TRAIN_FRAC * L)
        train, test = np.sort(order[:n_train]), np.sort(order[n_train:])

        mean = X[train].mean(axis=0)
        sd = X[train].std(axis=0, ddof=1)
        sd = np.where(sd == 0.0, 1.0, sd)
        Xs_train = (X[train] - mean) / sd
        Xs_test = (X[test] - mean) / sd
        y_mean = y[train].mean()
        yc_train = y[train] - y_mean

        if not np.abs(Xs_train.T @ yc_train).max() > 0.0:
            continue  # target constant on this fold; nothing to fit
        gram = lasso_gram(Xs_train, yc_train)
        w = np.zeros(X.shape[1])
        for lam in lambda_path(Xs_train, yc_train):
            problem = LassoProblem(X=Xs_train, y=yc_train, lam=float(lam))
            w = lasso_cd(problem, tol=tol, max_iter=max_iter, w0=w, gram=gram).w
            prediction = Xs_test @ w + y_mean
            try:
                score = r2_score(y[test], prediction)
            except ZeroVariance:
                continue
            if best is None or score > best[0]:
                best = (score, fold, float(lam), w.copy())
    if best is None:
        raise ZeroVariance("no lasso fold produced a scorable model")
    score, fold, lam, w = best
    support = tuple(int(i) for i in np.flatnonzero(w != 0.0))
    if support:
        return SelectionMask(indices=support, method="Lasso",
                             metadata={"lambda": lam, "fold": fold, "score": score})
    # All-zero winner: keep the single strongest feature, flagged.
    Xs = _standardize_columns(X)
    strongest = int(np.argmax(np.abs(Xs.T @ (y - y.mean()))))
    log.warning("lasso mask empty at k=%d; falling back to feature %d", k, strongest)
    return SelectionMask(indices=(strongest,), method="Lasso",
                         metadata={"lambda": lam, "fold": fold, "score": score,
                                   "fallback": True})


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def mask_to_text(mask: SelectionMask, spec: FeatureSpec) -> str:
    """Human-readable mask document: method, metadata, retained features."""
    lines = [f"method: {mask.method}"]
    for key in sorted(mask.metadata):
        if key == "scores":
            continue
        lines.append(f"{key}: {mask.metadata[key]}")
    lines.append(f"selected: {len(mask.indices)}")
    for index in mask.indices:
        lines.append(f"  {index:3d}  {spec.label(index)}")
    return "\n".join(lines) + "\n"


def write_mask(mask: SelectionMask, spec: FeatureSpec, path) -> None:
    Path(path).write_text(mask_to_text(mask, spec))
