"""Synthetic panels with known structure, shared by the test suite.

Three families:

* ``linear_panel`` -- all three series follow one shared stable linear
  recurrence (lags well inside the feature window) driven additively by the
  statics, so every future active value is an exact linear function of the
  flat feature vector up to a tiny injected noise.  Ground truth for linear
  recovery tests.
* ``noise_panel`` -- every series is iid noise, so the true r2 of any
  forecaster is zero and any train/test gap is pure overfitting.
* ``paperlike_panel`` -- bell-shaped epidemic waves per country with known
  correlations injected into chosen static pairs.
"""

from __future__ import annotations

import numpy as np

from activecast.ingest import Panel, STATIC_FEATURES


def _statics(rng: np.random.Generator, n_countries: int,
             names: tuple[str, ...]) -> np.ndarray:
    return rng.uniform(0.5, 1.5, size=(n_countries, len(names)))


def _country_names(n: int, include_turkey: bool = False) -> tuple[str, ...]:
    names = [f"Country{i:02d}" for i in range(n)]
    if include_turkey:
        names[-1] = "Turkey"
    return tuple(sorted(names))


def linear_panel(n_countries: int = 10, T: int = 120, seed: int = 0,
                 noise_rel: float = 1e-6,
                 static_names: tuple[str, ...] = STATIC_FEATURES) -> Panel:
    """Panel governed by a stable joint linear recurrence plus statics drive.

    Recurrence lags stay <= 7 days, inside the 14-day feature window, so for
    every horizon k the value active[t+k] is an exact linear function of the
    feature vector at anchor t, up to noise of ``noise_rel`` times the
    series scale injected at each step.
    """
    rng = np.random.default_rng(seed)
    names = _country_names(n_countries)
    statics = _statics(rng, n_countries, static_names)

    # statics-driven inflows (linear in the static features)
    w_a = rng.uniform(0.0, 1.0, len(static_names))
    w_d = rng.uniform(0.0, 0.3, len(static_names))
    w_r = rng.uniform(0.0, 0.5, len(static_names))
    drive_a = statics @ w_a          # per country
    drive_d = statics @ w_d
    drive_r = statics @ w_r

    rho, theta = 0.985, 2 * np.pi / 45.0
    a1, a2 = 2 * rho * np.cos(theta), -rho * rho

    warmup = 30
    total = T + warmup
    active = np.zeros((n_countries, total))
    deaths = np.zeros((n_countries, total))
    recov = np.zeros((n_countries, total))
    scale = 1000.0
    active[:, :8] = scale * rng.uniform(0.8, 1.2, size=(n_countries, 8))
    deaths[:, :8] = 20.0 * rng.uniform(0.5, 1.5, size=(n_countries, 8))
    recov[:, :8] = 50.0 * rng.uniform(0.5, 1.5, size=(n_countries, 8))
    eps = noise_rel * scale
    for t in range(8, total):
        deaths[:, t] = (0.85 * deaths[:, t - 1] + 0.10 * deaths[:, t - 7]
                        + drive_d + eps * rng.standard_normal(n_countries))
        recov[:, t] = (0.80 * recov[:, t - 1] + 0.15 * recov[:, t - 3]
                       + drive_r + eps * rng.standard_normal(n_countries))
        active[:, t] = (a1 * active[:, t - 1] + a2 * active[:, t - 2]
                        + 0.3 * deaths[:, t - 1] + 0.2 * recov[:, t - 3]
                        + drive_a * scale / 10.0
                        + eps * rng.standard_normal(n_countries))
    start = np.datetime64("2020-01-22")
    dates = tuple(str(start + np.timedelta64(i, "D")) for i in range(T))
    return Panel(
        countries=names,
        dates=dates,
        active=active[:, warmup:].copy(),
        deaths_daily=deaths[:, warmup:].copy(),
        recovered_daily=recov[:, warmup:].copy(),
        static_names=static_names,
        statics=statics,
    )


def noise_panel(n_countries: int = 6, T: int = 80, seed: int = 0,
                static_names: tuple[str, ...] = STATIC_FEATURES) -> Panel:
    """All three series iid standard normal: nothing is predictable."""
    rng = np.random.default_rng(seed)
    names = _country_names(n_countries)
    shape = (n_countries, T)
    start = np.datetime64("2020-01-22")
    dates = tuple(str(start + np.timedelta64(i, "D")) for i in range(T))
    return Panel(
        countries=names,
        dates=dates,
        active=rng.standard_normal(shape),
        deaths_daily=rng.standard_normal(shape),
        recovered_daily=rng.standard_normal(shape),
        static_names=static_names,
        statics=_statics(rng, n_countries, static_names),
    )


def paperlike_panel(n_countries: int = 12, T: int = 150, seed: int = 0,
                    integer: bool = False) -> Panel:
    """Bell-shaped waves plus statics with two injected correlations:
    latitude vs Avg-Temperature at -0.82 and Median-Age vs Fertility at
    -0.84 (the values the statics heatmap should recover)."""
    rng = np.random.default_rng(seed)
    names = _country_names(n_countries, include_turkey=True)
    t = np.arange(T, dtype=float)

    active = np.zeros((n_countries, T))
    deaths = np.zeros((n_countries, T))
    recov = np.zeros((n_countries, T))
    for c in range(n_countries):
        peak = rng.uniform(0.35 * T, 0.75 * T)
        width = rng.uniform(0.10 * T, 0.25 * T)
        amplitude = rng.uniform(2e4, 1e5)
        wave = amplitude * np.exp(-0.5 * ((t - peak) / width) ** 2)
        jitter = 1.0 + 0.02 * rng.standard_normal(T)
        active[c] = wave * jitter
        deaths[c] = 0.02 * np.roll(wave, 5) * (1 + 0.05 * rng.standard_normal(T))
        recov[c] = 0.06 * np.roll(wave, 10) * (1 + 0.05 * rng.standard_normal(T))
        deaths[c, :5] = deaths[c, 5]
        recov[c, :10] = recov[c, 10]
    deaths = np.maximum(deaths, 0.0)
    recov = np.maximum(recov, 0.0)

    statics = _statics(rng, n_countries, STATIC_FEATURES)
    col = {name: i for i, name in enumerate(STATIC_FEATURES)}

    def inject(first: str, second: str, target_corr: float) -> None:
        base = rng.standard_normal(n_countries)
        partner = (target_corr * base + np.sqrt(1 - target_corr ** 2)
                   * rng.standard_normal(n_countries))
        statics[:, col[first]] = base
        statics[:, col[second]] = partner

    inject("latitude", "Avg-Temperature", -0.82)
    inject("Median-Age", "Fertility", -0.84)
    statics[:, col["H1N1-Underestimate"]] = rng.integers(0, 2, n_countries)

    if integer:
        active = np.round(active)
        deaths = np.round(deaths)
        recov = np.round(recov)
    start = np.datetime64("2020-01-22")
    dates = tuple(str(start + np.timedelta64(i, "D")) for i in range(T))
    return Panel(
        countries=names,
        dates=dates,
        active=active,
        deaths_daily=deaths,
        recovered_daily=recov,
        static_names=STATIC_FEATURES,
        statics=statics,
    )


def sparse_linear_samples(n_rows: int, n_features: int, support, seed: int,
                          noise: float = 0.5):
    """Plain (X, y) with y linear in the given support columns plus noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_rows, n_features))
    coefs = rng.uniform(2.0, 5.0, size=len(support)) * rng.choice(
        [-1.0, 1.0], size=len(support))
    y = X[:, list(support)] @ coefs + noise * rng.standard_normal(n_rows)
    return X, y
