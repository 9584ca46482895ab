"""The three forecasters: linear regression, a two-hidden-layer perceptron,
and an LSTM network, all with deterministic seeded training.

MLP and LSTM gradients are computed analytically (verified against central
finite differences in the test suite) and optimized with mini-batch Adam on
the mean-squared error.  Training stops early once the epoch training loss
has not set a new minimum for ``patience`` consecutive epochs; the returned
parameters are those of the final epoch.

LSTM input shaping: the selected temporal features are scattered into a
``window x 3`` sequence (one channel per series, oldest step first); slots
whose (series, lag) was not selected stay zero.  Selected static features
bypass the recurrent layer and are concatenated with the final hidden state
before the two dense tanh layers and the linear output.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import AllCellsFailed, DegenerateTarget, MaskMismatch, NonFiniteLoss
from .featsel import SelectionMask
from .numerics import AdamState, adam_step, least_squares
from .samples import FeatureSpec, Scaler, TEMPORAL_SERIES

MODEL_KINDS = ("LR", "MLP", "LSTM")
HIDDEN_SIZES = (4, 8, 16, 32)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForecasterConfig:
    """Architecture and training hyperparameters for one forecaster."""

    kind: str
    n1: int = 16            # MLP hidden sizes
    n2: int = 16
    h_lstm: int = 16        # LSTM unit count and dense sizes
    h1: int = 16
    h2: int = 16
    batch_size: int = 200
    max_epochs: int = 600
    patience: int = 30
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name in ("n1", "n2", "h_lstm", "h1", "h2"):
            if getattr(self, name) not in HIDDEN_SIZES:
                raise ValueError(f"{name} must be one of {HIDDEN_SIZES}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ForecasterConfig":
        return cls(**data)


def param_count(config: ForecasterConfig, n_inputs: int, n_static: int = 0) -> int:
    """Trainable parameter count (used for grid-search tie-breaks)."""
    if config.kind == "LR":
        return n_inputs + 1
    if config.kind == "MLP":
        f, n1, n2 = n_inputs, config.n1, config.n2
        return f * n1 + n1 + n1 * n2 + n2 + n2 + 1
    H, h1, h2 = config.h_lstm, config.h1, config.h2
    n_ch = len(TEMPORAL_SERIES)
    lstm = 4 * H * (n_ch + H + 1)
    dense = (H + n_static) * h1 + h1 + h1 * h2 + h2 + h2 + 1
    return lstm + dense


# ---------------------------------------------------------------------------
# flat parameter layout
# ---------------------------------------------------------------------------

class _Layout:
    """Named shaped views into one flat parameter vector."""

    def __init__(self, shapes: dict[str, tuple[int, ...]]):
        self.shapes = shapes
        self.size = sum(int(np.prod(s)) for s in shapes.values())

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        views = {}
        offset = 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape))
            views[name] = theta[offset:offset + n].reshape(shape)
            offset += n
        return views

    def zeros(self) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        theta = np.zeros(self.size)
        return theta, self.unpack(theta)


def _glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

def mlp_layout(n_inputs: int, n1: int, n2: int) -> _Layout:
    return _Layout({
        "W1": (n_inputs, n1), "b1": (n1,),
        "W2": (n1, n2), "b2": (n2,),
        "w3": (n2,), "b3": (1,),
    })


def mlp_init(rng: np.random.Generator, n_inputs: int, n1: int, n2: int) -> np.ndarray:
    layout = mlp_layout(n_inputs, n1, n2)
    theta, p = layout.zeros()
    p["W1"][:] = _glorot(rng, (n_inputs, n1))
    p["W2"][:] = _glorot(rng, (n1, n2))
    p["w3"][:] = _glorot(rng, (n2, 1))[:, 0]
    return theta


def mlp_forward(p: dict[str, np.ndarray], X: np.ndarray):
    a1 = np.tanh(X @ p["W1"] + p["b1"])
    a2 = np.tanh(a1 @ p["W2"] + p["b2"])
    yhat = a2 @ p["w3"] + p["b3"][0]
    return yhat, (a1, a2)


def mlp_backward(p: dict[str, np.ndarray], X: np.ndarray, y: np.ndarray,
                 layout: _Layout) -> tuple[float, np.ndarray]:
    """Batch MSE and its exact gradient, packed flat."""
    yhat, (a1, a2) = mlp_forward(p, X)
    B = X.shape[0]
    err = yhat - y
    loss = float(err @ err / B)
    d = 2.0 * err / B
    grad = np.zeros(layout.size)
    g = layout.unpack(grad)
    g["w3"][:] = a2.T @ d
    g["b3"][0] = d.sum()
    dz2 = np.outer(d, p["w3"]) * (1.0 - a2 * a2)
    g["W2"][:] = a1.T @ dz2
    g["b2"][:] = dz2.sum(axis=0)
    dz1 = (dz2 @ p["W2"].T) * (1.0 - a1 * a1)
    g["W1"][:] = X.T @ dz1
    g["b1"][:] = dz1.sum(axis=0)
    return loss, grad


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LstmPlan:
    """Scatter plan from masked flat columns into (sequence, statics)."""

    window: int
    seq_slots: tuple[tuple[int, int, int], ...]   # (masked column, step, channel)
    static_cols: tuple[int, ...]                  # masked column positions

    @property
    def n_static(self) -> int:
        return len(self.static_cols)


def lstm_plan(mask: SelectionMask, spec: FeatureSpec) -> LstmPlan:
    seq_slots = []
    static_cols = []
    for col, original in enumerate(mask.indices):
        kind = spec.descriptor(original)
        if kind[0] == "lag":
            channel = TEMPORAL_SERIES.index(kind[1])
            step = spec.window - 1 - kind[2]  # oldest day first
            seq_slots.append((col, step, channel))
        else:
            static_cols.append(col)
    return LstmPlan(window=spec.window, seq_slots=tuple(seq_slots),
                    static_cols=tuple(static_cols))


def lstm_scatter(plan: LstmPlan, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B = X.shape[0]
    seq = np.zeros((B, plan.window, len(TEMPORAL_SERIES)))
    for col, step, channel in plan.seq_slots:
        seq[:, step, channel] = X[:, col]
    stat = X[:, list(plan.static_cols)] if plan.static_cols else np.zeros((B, 0))
    return seq, stat


def lstm_layout(H: int, h1: int, h2: int, n_static: int) -> _Layout:
    n_ch = len(TEMPORAL_SERIES)
    return _Layout({
        "Wx": (n_ch, 4 * H), "Wh": (H, 4 * H), "b": (4 * H,),
        "W1": (H + n_static, h1), "b1": (h1,),
        "W2": (h1, h2), "b2": (h2,),
        "w3": (h2,), "b3": (1,),
    })


def lstm_init(rng: np.random.Generator, H: int, h1: int, h2: int,
              n_static: int) -> np.ndarray:
    layout = lstm_layout(H, h1, h2, n_static)
    theta, p = layout.zeros()
    n_ch = len(TEMPORAL_SERIES)
    p["Wx"][:] = _glorot(rng, (n_ch, 4 * H))
    for gate in range(4):  # per-gate orthogonal recurrence
        p["Wh"][:, gate * H:(gate + 1) * H] = _orthogonal(rng, H)
    p["b"][H:2 * H] = 1.0  # forget gate open at start
    p["W1"][:] = _glorot(rng, (H + n_static, h1))
    p["W2"][:] = _glorot(rng, (h1, h2))
    p["w3"][:] = _glorot(rng, (h2, 1))[:, 0]
    return theta


def lstm_forward(p: dict[str, np.ndarray], seq: np.ndarray, stat: np.ndarray):
    """Unroll over the sequence; gate order is [input, forget, cell, output]."""
    B, W, _ = seq.shape
    H = p["Wh"].shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(W):
        z = seq[:, t, :] @ p["Wx"] + h @ p["Wh"] + p["b"]
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_prev = h
        h = o * tc
        steps.append((i, f, g, o, c_prev, tc, h_prev))
    u = np.concatenate([h, stat], axis=1)
    a1 = np.tanh(u @ p["W1"] + p["b1"])
    a2 = np.tanh(a1 @ p["W2"] + p["b2"])
    yhat = a2 @ p["w3"] + p["b3"][0]
    return yhat, (steps, u, a1, a2)


def lstm_backward(p: dict[str, np.ndarray], seq: np.ndarray, stat: np.ndarray,
                  y: np.ndarray, layout: _Layout) -> tuple[float, np.ndarray]:
    """Batch MSE and its exact gradient via backpropagation through time."""
    yhat, (steps, u, a1, a2) = lstm_forward(p, seq, stat)
    B, W, _ = seq.shape
    H = p["Wh"].shape[0]
    err = yhat - y
    loss = float(err @ err / B)
    d = 2.0 * err / B

    grad = np.zeros(layout.size)
    g = layout.unpack(grad)
    g["w3"][:] = a2.T @ d
    g["b3"][0] = d.sum()
    dz2 = np.outer(d, p["w3"]) * (1.0 - a2 * a2)
    g["W2"][:] = a1.T @ dz2
    g["b2"][:] = dz2.sum(axis=0)
    dz1 = (dz2 @ p["W2"].T) * (1.0 - a1 * a1)
    g["W1"][:] = u.T @ dz1
    g["b1"][:] = dz1.sum(axis=0)
    du = dz1 @ p["W1"].T

    dh = du[:, :H]
    dc_next = np.zeros((B, H))
    for t in range(W - 1, -1, -1):
        i, f, gc, o, c_prev, tc, h_prev = steps[t]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * gc
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - gc * gc),
            do * o * (1.0 - o),
        ], axis=1)
        g["Wx"] += seq[:, t, :].T @ dz
        g["Wh"] += h_prev.T @ dz
        g["b"] += dz.sum(axis=0)
        dh = dz @ p["Wh"].T
    return loss, grad


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainedForecaster:
    """A fitted model: pure function of (theta, input) at prediction time."""

    config: ForecasterConfig
    theta: np.ndarray
    n_inputs: int
    mask: SelectionMask
    window: int                    # feature-spec window (LSTM scatter)
    n_temporal_features: int       # 3 * window at fit time
    scaler: Scaler | None
    loss_curve: tuple[float, ...]

    def plan(self) -> LstmPlan:
        spec_like = _SpecShim(self.window, self.n_temporal_features)
        return lstm_plan(self.mask, spec_like)


class _SpecShim:
    """Just enough of FeatureSpec to rebuild an LSTM scatter plan."""

    def __init__(self, window: int, n_temporal: int):
        self.window = window
        self.n_temporal = n_temporal

    def descriptor(self, index: int):
        if index < self.n_temporal:
            series = TEMPORAL_SERIES[index // self.window]
            return ("lag", series, index % self.window)
        return ("static", f"s{index - self.n_temporal}")


def _epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def fit(config: ForecasterConfig, X_train: np.ndarray, y_train: np.ndarray,
        mask: SelectionMask, spec: FeatureSpec | None = None,
        scaler: Scaler | None = None) -> TrainedForecaster:
    """Fit one forecaster on a design matrix already restricted to the mask's
    columns.  LR is the closed-form least-squares fit; MLP/LSTM train with
    mini-batch Adam, seeded shuffling, and training-loss early stopping.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    if X_train.shape[1] != len(mask.indices):
        raise MaskMismatch(
            f"X has {X_train.shape[1]} columns, mask selects {len(mask.indices)}")
    window = spec.window if spec is not None else 0
    n_temporal = spec.n_temporal if spec is not None else 0

    if config.kind == "LR":
        w, b = least_squares(X_train, y_train)
        theta = np.append(w, b)
        resid = X_train @ w + b - y_train
        loss = float(resid @ resid / len(y_train))
        return TrainedForecaster(config, theta, X_train.shape[1], mask, window,
                                 n_temporal, scaler, (loss,))

    if float(y_train.std()) == 0.0:
        raise DegenerateTarget("gradient training needs a non-constant target")
    if config.kind == "LSTM" and spec is None:
        raise ValueError("LSTM fitting needs the feature spec for input shaping")

    rng = np.random.default_rng(config.seed)
    if config.kind == "MLP":
        layout = mlp_layout(X_train.shape[1], config.n1, config.n2)
        theta = mlp_init(rng, X_train.shape[1], config.n1, config.n2)

        def batch_grad(th, rows):
            return mlp_backward(layout.unpack(th), X_train[rows], y_train[rows], layout)
    else:
        plan = lstm_plan(mask, spec)
        seq, stat = lstm_scatter(plan, X_train)
        layout = lstm_layout(config.h_lstm, config.h1, config.h2, plan.n_static)
        theta = lstm_init(rng, config.h_lstm, config.h1, config.h2, plan.n_static)

        def batch_grad(th, rows):
            return lstm_backward(layout.unpack(th), seq[rows], stat[rows],
                                 y_train[rows], layout)

    state = AdamState.initial(layout.size, alpha=config.learning_rate)
    n = len(y_train)
    loss_curve: list[float] = []
    best = np.inf
    stale = 0
    for _ in range(config.max_epochs):
        total = 0.0
        for rows in _epoch_batches(rng, n, config.batch_size):
            loss, grad = batch_grad(theta, rows)
            total += loss * len(rows)
            theta, state = adam_step(theta, grad, state)
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise NonFiniteLoss(f"training loss became {epoch_loss}")
        loss_curve.append(epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return TrainedForecaster(config, theta, X_train.shape[1], mask, window,
                             n_temporal, scaler, tuple(loss_curve))


def predict(model: TrainedForecaster, X: np.ndarray) -> np.ndarray:
    """Deterministic forward pass on a matrix restricted to the model's mask."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise MaskMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {model.n_inputs}")
    config = model.config
    if config.kind == "LR":
        return X @ model.theta[:-1] + model.theta[-1]
    if config.kind == "MLP":
        layout = mlp_layout(model.n_inputs, config.n1, config.n2)
        yhat, _ = mlp_forward(layout.unpack(model.theta), X)
        return yhat
    plan = model.plan()
    seq, stat = lstm_scatter(plan, X)
    layout = lstm_layout(config.h_lstm, config.h1, config.h2, plan.n_static)
    yhat, _ = lstm_forward(layout.unpack(model.theta), seq, stat)
    return yhat


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_model(model: TrainedForecaster, path) -> None:
    """Versioned JSON document; floats round-trip exactly, so a reloaded
    model predicts bitwise identically."""
    document = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "mask": {
            "indices": list(model.mask.indices),
            "method": model.mask.method,
            "metadata": model.mask.metadata,
        },
        "n_inputs": model.n_inputs,
        "window": model.window,
        "n_temporal_features": model.n_temporal_features,
        "scaler": None if model.scaler is None else {
            "x_mean": model.scaler.x_mean.tolist(),
            "x_sd": model.scaler.x_sd.tolist(),
            "y_mean": {str(k): v for k, v in model.scaler.y_mean.items()},
            "y_sd": {str(k): v for k, v in model.scaler.y_sd.items()},
        },
        "theta": model.theta.tolist(),
        "loss_curve": list(model.loss_curve),
    }
    Path(path).write_text(json.dumps(document, sort_keys=True) + "\n")


def load_model(path) -> TrainedForecaster:
    document = json.loads(Path(path).read_text())
    if document.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {document.get('format_version')}")
    mask = SelectionMask(
        indices=tuple(document["mask"]["indices"]),
        method=document["mask"]["method"],
        metadata=document["mask"]["metadata"],
    )
    scaler = None
    if document["scaler"] is not None:
        s = document["scaler"]
        scaler = Scaler(
            x_mean=np.array(s["x_mean"]),
            x_sd=np.array(s["x_sd"]),
            y_mean={int(k): v for k, v in s["y_mean"].items()},
            y_sd={int(k): v for k, v in s["y_sd"].items()},
        )
    return TrainedForecaster(
        config=ForecasterConfig.from_dict(document["config"]),
        theta=np.array(document["theta"]),
        n_inputs=document["n_inputs"],
        mask=mask,
        window=document["window"],
        n_temporal_features=document["n_temporal_features"],
        scaler=scaler,
        loss_curve=tuple(document["loss_curve"]),
    )


# ---------------------------------------------------------------------------
# architecture grid search
# ---------------------------------------------------------------------------

def grid_candidates(kind: str, base: ForecasterConfig,
                    fast: bool = False) -> list[ForecasterConfig]:
    if kind == "MLP":
        return [replace(base, kind="MLP", n1=a, n2=b)
                for a, b in itertools.product(HIDDEN_SIZES, HIDDEN_SIZES)]
    if kind == "LSTM":
        if fast:
            return [replace(base, kind="LSTM", h_lstm=a, h1=b, h2=b)
                    for a, b in itertools.product(HIDDEN_SIZES, HIDDEN_SIZES)]
        return [replace(base, kind="LSTM", h_lstm=a, h1=b, h2=c)
                for a, b, c in itertools.product(HIDDEN_SIZES, HIDDEN_SIZES, HIDDEN_SIZES)]
    raise ValueError(f"no architecture grid for kind {kind!r}")


def grid_search(kind: str, mask: SelectionMask, spec: FeatureSpec, evaluate,
                base: ForecasterConfig | None = None, fast: bool = False):
    """Pick the architecture with the highest score under ``evaluate``.

    ``evaluate(config) -> float`` returns the config's mean CV test score
    (NaN for a failed cell).  Ties go to fewer trainable parameters, then to
    the lexicographically smaller size tuple.  Raises
    :class:`AllCellsFailed` when nothing scores.
    """
    base = base or ForecasterConfig(kind=kind)
    n_inputs = len(mask.indices)
    n_static = sum(1 for i in mask.indices if spec.descriptor(i)[0] == "static")
    best: tuple | None = None  # (score, -params, candidate order) maximized
    scores: dict[str, float] = {}
    for order, candidate in enumerate(grid_candidates(kind, base, fast)):
        score = evaluate(candidate)
        sizes = ((candidate.n1, candidate.n2) if kind == "MLP"
                 else (candidate.h_lstm, candidate.h1, candidate.h2))
        scores["x".join(map(str, sizes))] = score
        if score is None or not np.isfinite(score):
            continue
        params = param_count(candidate, n_inputs, n_static)
        key = (score, -params, -order)
        if best is None or key > best[0]:
            best = (key, candidate)
    if best is None:
        raise AllCellsFailed(f"every {kind} architecture failed to score")
    return best[1], scores
