"""Monte-Carlo cross-validation: repeated independent random 80/20 splits.

This is deliberately not partitioned k-fold; each repetition draws a fresh
seeded 80/20 split at the sample-row level (``seed + r`` for repetition r).
Because windows of neighboring rows overlap, row-level splits let test-set
information leak into training through shared days; ``group_by_country``
splits whole countries instead for a leakage-free variant.

Scalers and models see training rows only; both scores are computed on the
original target scale.  Repetitions that fail (degenerate target, diverged
training, constant test slice) are recorded and excluded from the means.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateTarget, NonFiniteLoss, ZeroVariance
from .featsel import SelectionMask
from .models import ForecasterConfig, TrainedForecaster, fit, predict
from .numerics import r2_score
from .samples import SampleSet, fit_scaler, inverse_target, transform, transform_target
from .seeding import derive_seed


@dataclass
class CvReport:
    """Per-repetition scores; failed repetitions hold NaN plus a reason."""

    train_r2: tuple[float, ...]
    test_r2: tuple[float, ...]
    seeds: tuple[int, ...]
    failures: tuple[str | None, ...]

    @property
    def n_reps(self) -> int:
        return len(self.train_r2)

    @property
    def valid(self) -> np.ndarray:
        return np.array([f is None for f in self.failures])

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def _stats(self, values) -> tuple[float, float]:
        values = np.asarray(values)[self.valid]
        if values.size == 0:
            return float("nan"), float("nan")
        mean = float(values.mean())
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return mean, std

    @property
    def train_mean(self) -> float:
        return self._stats(self.train_r2)[0]

    @property
    def train_std(self) -> float:
        return self._stats(self.train_r2)[1]

    @property
    def test_mean(self) -> float:
        return self._stats(self.test_r2)[0]

    @property
    def test_std(self) -> float:
        return self._stats(self.test_r2)[1]

    def to_dict(self) -> dict:
        def clean(values):
            return [None if not np.isfinite(v) else float(v) for v in values]

        return {
            "train_r2": clean(self.train_r2),
            "test_r2": clean(self.test_r2),
            "seeds": list(self.seeds),
            "failures": list(self.failures),
            "train_mean": _none_if_nan(self.train_mean),
            "train_std": _none_if_nan(self.train_std),
            "test_mean": _none_if_nan(self.test_mean),
            "test_std": _none_if_nan(self.test_std),
            "n_valid": self.n_valid,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CvReport":
        def restore(values):
            return tuple(float("nan") if v is None else float(v) for v in values)

        return cls(
            train_r2=restore(data["train_r2"]),
            test_r2=restore(data["test_r2"]),
            seeds=tuple(data["seeds"]),
            failures=tuple(data["failures"]),
        )


def _none_if_nan(x: float):
    return None if not np.isfinite(x) else float(x)


@dataclass
class RepetitionDetail:
    """Split bookkeeping for leakage assertions in tests."""

    train_rows: np.ndarray
    test_rows: np.ndarray
    mask: SelectionMask
    config: ForecasterConfig
    model: TrainedForecaster | None


def split_rows(n_rows: int, rng: np.random.Generator, train_frac: float = 0.8,
               groups=None) -> tuple[np.ndarray, np.ndarray]:
    """Random train/test split; with ``groups`` the split happens at the
    group level and rows follow their group."""
    if groups is None:
        order = rng.permutation(n_rows)
        n_train = int(train_frac * n_rows)
        return np.sort(order[:n_train]), np.sort(order[n_train:])
    labels = sorted(set(groups))
    order = rng.permutation(len(labels))
    n_train = max(1, min(len(labels) - 1, int(train_frac * len(labels))))
    train_labels = {labels[i] for i in order[:n_train]}
    member = np.array([g in train_labels for g in groups])
    return np.flatnonzero(member), np.flatnonzero(~member)


_FAILURE_TYPES = (DegenerateTarget, NonFiniteLoss, ZeroVariance)


def mc_cv(samples: SampleSet, mask: SelectionMask, config: ForecasterConfig,
          k: int, n_reps: int = 10, seed: int = 0, *, train_frac: float = 0.8,
          group_by_country: bool = False, standardize_lr: bool = False,
          mask_builder=None, config_builder=None,
          collect_details: bool = False):
    """Monte-Carlo CV report for one (mask, config, horizon) cell.

    ``mask_builder(train_samples, seed)`` and
    ``config_builder(train_samples, mask, seed)``, when given, recompute the
    mask / architecture inside each repetition from training rows only (the
    leakage-safe nested mode).  Returns a :class:`CvReport`, plus a detail
    list when ``collect_details`` is set.
    """
    if k not in samples.targets:
        raise ValueError(f"horizon {k} not built into the sample set")
    y = samples.targets[k]
    groups = samples.row_country if group_by_country else None

    train_scores, test_scores, seeds, failures = [], [], [], []
    details: list[RepetitionDetail] = []
    for r in range(n_reps):
        split_seed = seed + r
        rng = np.random.default_rng(split_seed)
        train, test = split_rows(samples.n_rows, rng, train_frac, groups)
        seeds.append(split_seed)
        model = None
        rep_mask = mask
        rep_config = config
        try:
            if mask_builder is not None:
                rep_mask = mask_builder(samples.subset(train), derive_seed(seed, "sel", r))
            if config_builder is not None:
                rep_config = config_builder(samples.subset(train), rep_mask,
                                            derive_seed(seed, "arch", r))
            rep_config = replace(rep_config, seed=derive_seed(seed, "fit", r))
            if rep_config.kind == "LR" and not standardize_lr:
                Xm = samples.X[:, rep_mask.indices]
                model = fit(rep_config, Xm[train], y[train], rep_mask,
                            samples.feature_spec)
                pred_train = predict(model, Xm[train])
                pred_test = predict(model, Xm[test])
            else:
                scaler = fit_scaler(samples, train)
                Xs = transform(samples, scaler)[:, rep_mask.indices]
                ys = transform_target(scaler, k, y)
                model = fit(rep_config, Xs[train], ys[train], rep_mask,
                            samples.feature_spec, scaler)
                pred_train = inverse_target(scaler, k, predict(model, Xs[train]))
                pred_test = inverse_target(scaler, k, predict(model, Xs[test]))
            train_scores.append(r2_score(y[train], pred_train))
            test_scores.append(r2_score(y[test], pred_test))
            failures.append(None)
        except _FAILURE_TYPES as exc:
            train_scores.append(float("nan"))
            test_scores.append(float("nan"))
            failures.append(type(exc).__name__)
        if collect_details:
            details.append(RepetitionDetail(train, test, rep_mask, rep_config, model))
    report = CvReport(
        train_r2=tuple(train_scores),
        test_r2=tuple(test_scores),
        seeds=tuple(seeds),
        failures=tuple(failures),
    )
    return (report, details) if collect_details else report
