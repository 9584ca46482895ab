"""Run configuration: one flat key set, readable from a plain-text file.

The config file is ``key = value`` lines (``#`` comments allowed); every
key has a CLI flag override and precedence is flag > file > default.  List
values are comma-separated; K sets also accept ``a..b`` ranges.

Fast mode is the reduced-cost preset: K in {1, 3, 5, 10, 15, 30}, tied LSTM
dense sizes in the architecture grid, 100 training epochs, 2 repetitions
for selection and grid scoring, and LR as the scoring surrogate during
threshold / prefix searches.  Every fast default can be overridden
individually.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

MODES = ("paper", "strict_nested")
FAST_K_SET = (1, 3, 5, 10, 15, 30)

_MODEL_CHOICES = ("LR", "MLP", "LSTM")
_METHOD_CHOICES = ("NoFS", "PCorr", "RFS", "Lasso")


class ConfigError(ValueError):
    """Bad configuration value or file."""


@dataclass(frozen=True)
class RunConfig:
    # data inputs
    confirmed: str | None = None
    deaths: str | None = None
    recovered: str | None = None
    statics: tuple[str, ...] = ()
    start_date: str | None = None
    end_date: str | None = None
    # experiment axes
    k_set: tuple[int, ...] | None = None    # None -> fast/full default
    models: tuple[str, ...] = _MODEL_CHOICES
    methods: tuple[str, ...] = _METHOD_CHOICES
    # execution
    seed: int = 0
    mode: str = "paper"
    fast: bool = False
    out: str = "out"
    workers: int = 1
    window: int = 14
    group_by_country: bool = False
    surrogate_lr: bool | None = None        # None -> on in fast mode
    statics_only: bool = False
    standardize_lr: bool = False
    # training / CV depth
    n_reps: int = 10
    grid_reps: int | None = None            # None -> n_reps, fast 2
    sel_reps: int | None = None             # None -> n_reps, fast 2
    max_epochs: int | None = None           # None -> 600, fast 100
    batch_size: int = 200
    patience: int = 30

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.models:
            raise ConfigError("model set must be non-empty")
        if not self.methods:
            raise ConfigError("method set must be non-empty")
        for m in self.models:
            if m not in _MODEL_CHOICES:
                raise ConfigError(f"unknown model {m!r}")
        for m in self.methods:
            if m not in _METHOD_CHOICES:
                raise ConfigError(f"unknown method {m!r}")
        if self.k_set is not None:
            if not self.k_set:
                raise ConfigError("K set must be non-empty")
            for k in self.k_set:
                if not 1 <= k <= 30:
                    raise ConfigError(f"K values must lie in 1..30, got {k}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.n_reps < 1:
            raise ConfigError("n_reps must be >= 1")

    # --- resolved (fast-aware) values ---

    @property
    def effective_k_set(self) -> tuple[int, ...]:
        if self.k_set is not None:
            return tuple(sorted(set(self.k_set)))
        return FAST_K_SET if self.fast else tuple(range(1, 31))

    @property
    def effective_max_epochs(self) -> int:
        if self.max_epochs is not None:
            return self.max_epochs
        return 100 if self.fast else 600

    @property
    def effective_grid_reps(self) -> int:
        if self.grid_reps is not None:
            return self.grid_reps
        return 2 if self.fast else self.n_reps

    @property
    def effective_sel_reps(self) -> int:
        if self.sel_reps is not None:
            return self.sel_reps
        return 2 if self.fast else self.n_reps

    @property
    def effective_surrogate_lr(self) -> bool:
        if self.surrogate_lr is not None:
            return self.surrogate_lr
        return self.fast

    def to_dict(self) -> dict:
        return asdict(self)

    def snapshot_dict(self) -> dict:
        """The experiment-defining keys: everything except where results are
        written and how many workers ran (those must not change result
        bytes)."""
        data = self.to_dict()
        data.pop("out")
        data.pop("workers")
        return data

    def snapshot_hash(self) -> str:
        """Stable digest of the experiment-defining configuration."""
        payload = json.dumps(self.snapshot_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

_LIST_KEYS = {"statics", "models", "methods"}
_INT_KEYS = {"seed", "workers", "window", "n_reps", "grid_reps", "sel_reps",
             "max_epochs", "batch_size", "patience"}
_BOOL_KEYS = {"fast", "group_by_country", "surrogate_lr", "statics_only",
              "standardize_lr"}
_STR_KEYS = {"confirmed", "deaths", "recovered", "start_date", "end_date",
             "mode", "out"}


def parse_k_set(text: str) -> tuple[int, ...]:
    """Accepts ``1,3,5`` and ``1..30`` (also mixed: ``1..5,10``)."""
    values: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise ConfigError(f"empty K set {text!r}")
    return tuple(values)


def _parse_bool(text: str, key: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"{key}: cannot parse boolean from {text!r}")


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a keyword dict for RunConfig."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in _STR_KEYS:
            values[key] = value
        elif key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"{source}:{lineno}: {key} needs an integer") from None
        elif key in _BOOL_KEYS:
            values[key] = _parse_bool(value, key)
        elif key in _LIST_KEYS:
            values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        elif key == "k_set":
            values[key] = parse_k_set(value)
        else:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
    return values


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def build_config(file_values: dict | None = None,
                 flag_values: dict | None = None) -> RunConfig:
    """Merge defaults, config-file values, and CLI flags (highest wins)."""
    merged: dict = {}
    merged.update(file_values or {})
    for key, value in (flag_values or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
