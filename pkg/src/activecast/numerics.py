"""Core numerical routines.

Correlation, the r2 score, least squares, a Lasso coordinate-descent
solver, the Adam update, and a finite-difference gradient checker.  All
routines are pure functions over double-precision numpy arrays and are
safe to call concurrently on shared read-only inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ZeroVariance


# ---------------------------------------------------------------------------
# correlation and scores
# ---------------------------------------------------------------------------

def pearson_with_flag(x, y) -> tuple[float, bool]:
    """Pearson correlation plus a validity flag.

    Returns ``(rho, True)`` normally.  If either input has zero variance the
    correlation is undefined; the sentinel ``(0.0, False)`` is returned
    instead of raising, because constant columns occur legitimately (a static
    feature can be constant over a small training fold) and must never be
    treated as correlated.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape or x.size < 2:
        raise ValueError("pearson expects two 1-d arrays of equal length >= 2")
    dx = x - x.mean()
    dy = y - y.mean()
    n1 = x.size - 1
    sx = np.sqrt(dx @ dx / n1)
    sy = np.sqrt(dy @ dy / n1)
    if sx == 0.0 or sy == 0.0:
        return 0.0, False
    rho = (dx @ dy / n1) / (sx * sy)
    return float(np.clip(rho, -1.0, 1.0)), True


def pearson(x, y) -> float:
    """Pearson product-moment correlation (sample covariance, n-1 denominator)."""
    return pearson_with_flag(x, y)[0]


def correlation_matrix(X) -> np.ndarray:
    """Pairwise Pearson correlations of the columns of an L x n matrix.

    Zero-variance columns get 0 everywhere off the diagonal.  The result is
    exactly symmetric, has a unit diagonal, and all entries in [-1, 1].
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("correlation_matrix expects an L x n matrix with L >= 2")
    Z = X - X.mean(axis=0)
    sd = np.sqrt((Z * Z).sum(axis=0) / (X.shape[0] - 1))
    ok = sd > 0.0
    Zn = Z / np.where(ok, sd, 1.0)
    Zn[:, ~ok] = 0.0
    C = Zn.T @ Zn / (X.shape[0] - 1)
    C = (C + C.T) / 2.0
    C = np.clip(C, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot.

    0 is the score of predicting the mean of ``y_true``; the score is
    unbounded below.  Raises :class:`ZeroVariance` for a constant ``y_true``.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size < 2:
        raise ValueError("r2_score expects two 1-d arrays of equal length >= 2")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ZeroVariance("r2 is undefined for a constant target")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# least squares
# ---------------------------------------------------------------------------

def least_squares(X, y) -> tuple[np.ndarray, float]:
    """Minimize ||y - X w - b||^2 and return ``(w, b)``.

    Solved by SVD on centered data, so rank-deficient systems yield the
    minimum-norm ``w`` instead of failing.  No normal equations are formed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size or X.shape[0] < 1:
        raise ValueError("least_squares expects X (L x n) and y (L,), L >= 1")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    w, *_ = np.linalg.lstsq(X - x_mean, y - y_mean, rcond=None)
    b = float(y_mean - x_mean @ w)
    return w, b


# ---------------------------------------------------------------------------
# Lasso
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LassoProblem:
    """min_w  (1 / (2 L)) ||y - X w||^2  +  lam * ||w||_1

    Columns of ``X`` and ``y`` are expected to be centered; the intercept is
    handled outside the solver by that centering and is not penalized.
    """

    X: np.ndarray
    y: np.ndarray
    lam: float

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError("lam must be non-negative")


@dataclass
class LassoResult:
    w: np.ndarray
    converged: bool
    n_sweeps: int
    objectives: np.ndarray  # objective value after each sweep


def soft_threshold(z: float, lam: float) -> float:
    """sign(z) * max(|z| - lam, 0)."""
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def lasso_objective(problem: LassoProblem, w) -> float:
    r = problem.y - problem.X @ w
    return float((r @ r) / (2 * len(problem.y)) + problem.lam * np.abs(w).sum())


def lambda_max(X, y) -> float:
    """Smallest lam at which the Lasso solution is identically zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.abs(X.T @ y).max() / X.shape[0])


def lambda_path(X, y, n_values: int = 100, ratio: float = 1e-3) -> np.ndarray:
    """Geometric grid of ``n_values`` lams from lambda_max down to ratio * lambda_max."""
    lmax = lambda_max(X, y)
    if lmax <= 0.0:
        raise ValueError("lambda_max is zero; X'y vanishes")
    return np.geomspace(lmax, ratio * lmax, n_values)


def kkt_residual(problem: LassoProblem, w) -> float:
    """Max violation of the Lasso optimality conditions at ``w``.

    For active coordinates the gradient must equal lam * sign(w_j); for the
    rest its magnitude must not exceed lam.
    """
    w = np.asarray(w, dtype=float)
    r = problem.y - problem.X @ w
    g = problem.X.T @ r / len(problem.y)
    active = w != 0.0
    res_active = np.abs(g[active] - problem.lam * np.sign(w[active]))
    res_zero = np.abs(g[~active]) - problem.lam
    worst = 0.0
    if res_active.size:
        worst = max(worst, float(res_active.max()))
    if res_zero.size:
        worst = max(worst, float(max(res_zero.max(), 0.0)))
    return worst


def lasso_gram(X, y) -> tuple[np.ndarray, np.ndarray, float]:
    """Precomputed pieces (X'X/L, X'y/L, y'y/L) for :func:`lasso_cd`.

    Worth sharing when solving many lams over one design (a lambda path)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    L = X.shape[0]
    return X.T @ X / L, X.T @ y / L, float(y @ y) / L


def lasso_cd(problem: LassoProblem, tol: float = 1e-6, max_iter: int = 10000,
             w0=None, gram=None) -> LassoResult:
    """Cyclic coordinate descent for :class:`LassoProblem`.

    A sweep updates every coordinate once via the soft-threshold rule, using
    covariance updates (O(n) per coordinate after one Gram precomputation).
    Convergence requires both the largest absolute coefficient change of the
    sweep and the KKT residual to drop below ``tol`` (the residual check
    guards against declaring victory on a slow coordinate-wise plateau).  If
    ``max_iter`` sweeps pass first, the best iterate is returned with
    ``converged=False``.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    lam = float(problem.lam)
    G, c, yty = gram if gram is not None else lasso_gram(problem.X, problem.y)
    n = G.shape[0]
    diag = np.diag(G).copy()
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    q = G @ w  # q_j = (X'X w)_j / L, kept incrementally up to date
    objectives = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(n):
            if diag[j] == 0.0:
                continue
            w_old = w[j]
            rho = c[j] - q[j] + diag[j] * w_old
            w_new = soft_threshold(rho, lam) / diag[j]
            delta = w_new - w_old
            if delta != 0.0:
                q += G[:, j] * delta
                w[j] = w_new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
        objectives.append(float(yty / 2 - w @ c + (w @ q) / 2
                                + lam * np.abs(w).sum()))
        if max_delta < tol:
            # g = X'(y - Xw)/L from the Gram pieces, no pass over the data
            g = c - q
            active = w != 0.0
            worst = 0.0
            if active.any():
                worst = float(np.abs(g[active] - lam * np.sign(w[active])).max())
            if (~active).any():
                worst = max(worst, float(max(np.abs(g[~active]).max() - lam, 0.0)))
            if worst <= tol:
                converged = True
                break
    return LassoResult(w=w, converged=converged, n_sweeps=sweeps,
                       objectives=np.array(objectives))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    """Adam moments and step counter; default hyperparameters are the usual
    alpha=0.001, beta1=0.9, beta2=0.999, eps=1e-8."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initial(cls, n_params: int, **hyper) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0, **hyper)


def adam_step(params, grads, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; pure function of (params, grads, state)."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads and state must share one shape")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, analytic_grad, theta0, step: float = 1e-5) -> float:
    """Max relative error between ``analytic_grad`` and central differences.

    Per-coordinate relative error is |g_fd - g_an| / max(1, |g_fd| + |g_an|),
    which stays meaningful for near-zero gradients.
    """
    theta0 = np.asarray(theta0, dtype=float)
    g_an = np.asarray(analytic_grad(theta0), dtype=float)
    g_fd = np.empty_like(theta0)
    for i in range(theta0.size):
        plus = theta0.copy()
        plus[i] += step
        minus = theta0.copy()
        minus[i] -= step
        g_fd[i] = (f(plus) - f(minus)) / (2.0 * step)
    rel = np.abs(g_fd - g_an) / np.maximum(1.0, np.abs(g_fd) + np.abs(g_an))
    return float(rel.max())
