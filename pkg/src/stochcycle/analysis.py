"""Posterior analysis: parameter summaries, frequency-specific cycle
decomposition with credible bands, cycle clocks with quadrant probabilities
and quantile ellipsoids, and simulation-based forecasting.

Everything here consumes chain output draw-wise: each kept draw is pushed
through the exact filter, so every derived trajectory (component paths,
amplitude and phase bands, forecasts) carries full posterior uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import gaussian_kde

from .mcmc import ChainOutput
from .model import TimeSeries, filter_path, trend_vector

__all__ = [
    "ParameterSummary",
    "summarize",
    "derived_summary",
    "highest_density_interval",
    "CycleDecomposition",
    "decompose",
    "ClockSeries",
    "clock",
    "Ellipse",
    "quantile_ellipsoid",
    "Forecast",
    "forecast",
]

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Parameter summaries
# ---------------------------------------------------------------------------


@dataclass
class ParameterSummary:
    mean: float
    median: float
    modes: list
    std_dev: float
    quantile_ci: tuple
    hpd: tuple
    level: float


def highest_density_interval(draws: np.ndarray, level: float) -> tuple:
    """Shortest interval containing the requested posterior mass."""
    x = np.sort(np.asarray(draws, dtype=float).ravel())
    n = x.size
    span = int(math.floor(level * n))
    if span < 1 or span >= n:
        return (float(x[0]), float(x[-1]))
    widths = x[span:] - x[: n - span]
    i = int(np.argmin(widths))
    return (float(x[i]), float(x[i + span]))


def _kde_modes(draws: np.ndarray, rel_threshold: float = 0.10) -> list:
    """Local maxima of a Silverman-bandwidth KDE whose density exceeds the
    stated fraction of the global maximum, strongest first."""
    std = draws.std()
    if std <= 1e-12 * (1.0 + abs(float(draws.mean()))):
        return [float(np.median(draws))]
    kde = gaussian_kde(draws, bw_method="silverman")
    pad = 3.0 * std * draws.size ** -0.2
    grid = np.linspace(draws.min() - pad, draws.max() + pad, 512)
    dens = kde(grid)
    peak_idx = []
    for i in range(dens.size):
        left_ok = i == 0 or dens[i] > dens[i - 1]
        right_ok = i == dens.size - 1 or dens[i] > dens[i + 1]
        if left_ok and right_ok:
            peak_idx.append(i)
    cutoff = rel_threshold * dens.max()
    peak_idx = [i for i in peak_idx if dens[i] >= cutoff]
    peak_idx.sort(key=lambda i: -dens[i])
    if not peak_idx:  # pathological density shapes: never return no mode
        return [float(grid[int(np.argmax(dens))])]
    return [float(grid[i]) for i in peak_idx]


def summarize(draws: np.ndarray, ci_level: float = 0.95) -> ParameterSummary:
    """Posterior location/spread/interval summary of one parameter.

    The equal-tail interval comes from empirical quantiles, the HPD from
    the shortest-interval scan, and the mode list from kernel-density local
    maxima (all modes above 10% of the peak density are reported, so
    multimodal posteriors surface every relevant mode).
    """
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < 100:
        raise ValueError(f"need at least 100 draws, got {draws.size}")
    if not (0.0 < ci_level < 1.0):
        raise ValueError("ci_level must lie in (0, 1)")
    alpha = 1.0 - ci_level
    lo, hi = np.quantile(draws, [0.5 * alpha, 1.0 - 0.5 * alpha])
    return ParameterSummary(
        mean=float(draws.mean()),
        median=float(np.median(draws)),
        modes=_kde_modes(draws),
        std_dev=float(draws.std(ddof=1)),
        quantile_ci=(float(lo), float(hi)),
        hpd=highest_density_interval(draws, ci_level),
        level=ci_level,
    )


def derived_summary(draws: np.ndarray, transform, ci_level: float = 0.95) -> ParameterSummary:
    """Summary of a draw-wise transformed quantity (e.g. cycle length)."""
    draws = np.asarray(draws, dtype=float).ravel()
    mapped = np.array([transform(v) for v in draws], dtype=float)
    return summarize(mapped, ci_level)


# ---------------------------------------------------------------------------
# Cycle decomposition
# ---------------------------------------------------------------------------


@dataclass
class CycleDecomposition:
    """Per-draw frequency components plus pointwise posterior bands.

    components[m, j, t] is the j-th cycle component of draw m at time t+1;
    the observation identity y_t = sum_j components[m, j, t] + mu[m, t]
    + eps[m, t] holds draw-wise by construction.
    """

    components: np.ndarray        # (M, k, n)
    amplitude: np.ndarray         # (M, n), a + A_{t-1}
    phase: np.ndarray             # (M, n), P_{t-1}
    mu: np.ndarray                # (M, n)
    eps: np.ndarray               # (M, n)
    level: float
    draw_indices: np.ndarray
    component_median: np.ndarray = field(init=False)
    component_lower: np.ndarray = field(init=False)
    component_upper: np.ndarray = field(init=False)
    amplitude_median: np.ndarray = field(init=False)
    amplitude_lower: np.ndarray = field(init=False)
    amplitude_upper: np.ndarray = field(init=False)
    phase_median: np.ndarray = field(init=False)
    phase_lower: np.ndarray = field(init=False)
    phase_upper: np.ndarray = field(init=False)

    def __post_init__(self):
        alpha = 1.0 - self.level
        qs = [0.5, 0.5 * alpha, 1.0 - 0.5 * alpha]
        med, lo, hi = np.quantile(self.components, qs, axis=0)
        self.component_median, self.component_lower, self.component_upper = med, lo, hi
        med, lo, hi = np.quantile(self.amplitude, qs, axis=0)
        self.amplitude_median, self.amplitude_lower, self.amplitude_upper = med, lo, hi
        med, lo, hi = np.quantile(self.phase, qs, axis=0)
        self.phase_median, self.phase_lower, self.phase_upper = med, lo, hi

    @property
    def n_draws(self) -> int:
        return self.components.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def n(self) -> int:
        return self.components.shape[2]


def _select_rows(total: int, max_draws) -> np.ndarray:
    if max_draws is None or max_draws >= total:
        return np.arange(total)
    stride = total / max_draws
    return np.unique((np.arange(max_draws) * stride).astype(int))


def decompose(chain: ChainOutput, y: TimeSeries, level: float = 0.95,
              max_draws: int = None) -> CycleDecomposition:
    """Frequency-specific cycle components for each kept draw.

    Runs the exact filter per draw, lags the latent state, and evaluates
    each component (a + A_{t-1}) q_j sin(lambda_j (t + p_j + P_{t-1})).
    `max_draws` thins the chain evenly when decomposing every draw would
    be wasteful (plots).
    """
    rows = _select_rows(chain.draws.shape[0], max_draws)
    n = y.n
    k = chain.k
    t_grid = np.arange(1, n + 1, dtype=float)
    comps = np.empty((rows.size, k, n))
    amp = np.empty((rows.size, n))
    phs = np.empty((rows.size, n))
    mu = np.empty((rows.size, n))
    eps = np.empty((rows.size, n))
    for out_i, row in enumerate(rows):
        params = chain.params_at(int(row))
        path = filter_path(params, y)
        a_prev = np.concatenate(([params.a_init[0]], path.A[:-1]))
        p_prev = np.concatenate(([0.0], path.P[:-1]))
        q_full = params.q_full
        amp[out_i] = params.a + a_prev
        phs[out_i] = p_prev
        mu[out_i] = trend_vector(n, params.beta)
        eps[out_i] = path.eps
        for j in range(k):
            lam_j = params.lam[j]
            u = (t_grid + params.p_shift[j] + p_prev) % (TWO_PI / lam_j)
            comps[out_i, j] = amp[out_i] * q_full[j] * np.sin(lam_j * u)
    return CycleDecomposition(components=comps, amplitude=amp, phase=phs,
                              mu=mu, eps=eps, level=level, draw_indices=rows)


# ---------------------------------------------------------------------------
# Cycle clocks
# ---------------------------------------------------------------------------


@dataclass
class Ellipse:
    """Quantile ellipsoid: points x with (x-center)' shape^{-1} (x-center)
    <= radius^2."""

    center: np.ndarray
    shape: np.ndarray
    radius: float

    def mahalanobis(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        sol = np.linalg.solve(self.shape, pts.T)
        return np.sqrt(np.einsum("ij,ji->i", pts, sol))

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.mahalanobis(points) <= self.radius

    def to_dict(self) -> dict:
        return {
            "center": [float(v) for v in self.center],
            "shape": [[float(v) for v in row] for row in self.shape],
            "radius": float(self.radius),
        }


def quantile_ellipsoid(sample2d: np.ndarray, level: float) -> Ellipse:
    """Ellipsoid through the empirical level-quantile of Mahalanobis
    distances: the stated fraction of the sample lies inside (up to 1/n)."""
    pts = np.asarray(sample2d, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("sample must have shape (n, 2)")
    if pts.shape[0] < 100:
        raise ValueError(f"need at least 100 points, got {pts.shape[0]}")
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie in (0, 1)")
    center = pts.mean(axis=0)
    shape = np.cov(pts.T, ddof=1)
    if not np.all(np.isfinite(shape)) or np.linalg.det(shape) <= 0:
        raise ValueError("sample covariance is singular")
    ell = Ellipse(center=center, shape=shape, radius=0.0)
    ell.radius = float(np.quantile(ell.mahalanobis(pts), level))
    return ell


@dataclass
class ClockSeries:
    """Cycle clock for one frequency: medians of (change, level) pairs,
    quadrant probabilities and optional quantile ellipsoids per time point.

    Quadrant convention (counterclockwise from expansion): 1 = (+, +)
    expansion, 2 = (-, +) downturn, 3 = (-, -) contraction, 4 = (+, -)
    recovery. Draws landing exactly on an axis belong to no quadrant and
    are reported as tie mass.
    """

    frequency_index: int
    time_index: np.ndarray        # t = 2..n
    clock_x: np.ndarray           # median of C_t - C_{t-1}
    clock_y: np.ndarray           # median of C_t
    quadrant_probs: np.ndarray    # (n-1, 4)
    tie_mass: np.ndarray          # (n-1,)
    ellipses: dict                # level -> list[Ellipse | None] per time


def clock(decomp: CycleDecomposition, j: int,
          ellipse_levels=(0.30, 0.60, 0.90)) -> ClockSeries:
    """Cycle clock statistics of component j from a decomposition."""
    comp = decomp.components[:, j, :]
    n = comp.shape[1]
    if n < 2:
        raise ValueError("clock needs at least two time points")
    delta = comp[:, 1:] - comp[:, :-1]
    level = comp[:, 1:]
    clock_x = np.median(delta, axis=0)
    clock_y = np.median(level, axis=0)
    n_draws = comp.shape[0]
    quad = np.empty((n - 1, 4))
    tie = np.empty(n - 1)
    for t in range(n - 1):
        d, c = delta[:, t], level[:, t]
        quad[t, 0] = np.mean((d > 0) & (c > 0))
        quad[t, 1] = np.mean((d < 0) & (c > 0))
        quad[t, 2] = np.mean((d < 0) & (c < 0))
        quad[t, 3] = np.mean((d > 0) & (c < 0))
        tie[t] = 1.0 - quad[t].sum()
    ellipses = {}
    for lv in ellipse_levels:
        per_t = []
        for t in range(n - 1):
            pts = np.column_stack([delta[:, t], level[:, t]])
            try:
                per_t.append(quantile_ellipsoid(pts, lv))
            except ValueError:
                per_t.append(None)  # degenerate sample (e.g. single draw)
        ellipses[float(lv)] = per_t
    return ClockSeries(
        frequency_index=j,
        time_index=np.arange(2, n + 1),
        clock_x=clock_x,
        clock_y=clock_y,
        quadrant_probs=quad,
        tie_mass=tie,
        ellipses=ellipses,
    )


# ---------------------------------------------------------------------------
# Forecasting
# ---------------------------------------------------------------------------


def _propagate_paths(params, a_lag, p_last, t_last, horizon, n_for_trend, eps):
    """Lockstep forward simulation of many paths from a common state.

    a_lag holds (A_t, A_{t-1}, ..., A_{t-p+1}) at the forecast origin,
    p_last the phase state; eps has shape (n_paths, horizon).
    """
    n_paths = eps.shape[0]
    p = params.p
    lag = np.tile(np.asarray(a_lag, dtype=float), (n_paths, 1))
    phase = np.full(n_paths, float(p_last))
    q_full = params.q_full
    out = np.empty((n_paths, horizon))
    mu = trend_vector(n_for_trend, params.beta, t_start=t_last + 1, length=horizon)
    for s in range(horizon):
        t = t_last + s + 1
        sines = np.zeros(n_paths)
        for j in range(params.k):
            lam_j = params.lam[j]
            u = (t + params.p_shift[j] + phase) % (TWO_PI / lam_j)
            sines += q_full[j] * np.sin(lam_j * u)
        m = mu[s] + (params.a + lag[:, 0]) * sines
        out[:, s] = m + eps[:, s]
        a_new = lag @ params.phi + params.alpha_A * eps[:, s]
        if p > 1:
            lag[:, 1:] = lag[:, :-1]
        lag[:, 0] = a_new
        phase = params.psi_P * phase + params.alpha_P * eps[:, s]
    return out


def _end_state(params, path, n):
    p = params.p
    a_lag = np.empty(p)
    for i in range(p):
        idx = n - 1 - i
        a_lag[i] = path.A[idx] if idx >= 0 else params.a_init[-idx - 1]
    return a_lag, path.P[n - 1]


@dataclass
class Forecast:
    """Pooled h-step predictive summaries plus the zero-innovation point
    forecast (which, when all stochastic loadings vanish, is exactly the
    deterministic sinusoid extrapolation)."""

    time_index: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    variance: np.ndarray
    point: np.ndarray             # (n_draws, horizon) zero-innovation paths
    point_median: np.ndarray
    level: float


def forecast(chain: ChainOutput, y: TimeSeries, horizon: int,
             paths_per_draw: int = 20, rng=None, ci_level: float = 0.95,
             max_draws: int = None) -> Forecast:
    """Simulation-based predictive distribution.

    For each kept draw the filter runs to the end of the sample, then
    `paths_per_draw` trajectories continue forward with fresh Gaussian
    innovations; predictive summaries pool all draws and paths.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    rows = _select_rows(chain.draws.shape[0], max_draws)
    n = y.n
    samples = np.empty((rows.size * paths_per_draw, horizon))
    point = np.empty((rows.size, horizon))
    for out_i, row in enumerate(rows):
        params = chain.params_at(int(row))
        path = filter_path(params, y)
        a_lag, p_last = _end_state(params, path, n)
        eps = rng.normal(0.0, math.sqrt(params.sigma2), size=(paths_per_draw, horizon))
        block = _propagate_paths(params, a_lag, p_last, n, horizon, n, eps)
        samples[out_i * paths_per_draw:(out_i + 1) * paths_per_draw] = block
        point[out_i] = _propagate_paths(params, a_lag, p_last, n, horizon, n,
                                        np.zeros((1, horizon)))[0]
    alpha = 1.0 - ci_level
    lo, med, hi = np.quantile(samples, [0.5 * alpha, 0.5, 1.0 - 0.5 * alpha], axis=0)
    return Forecast(
        time_index=np.arange(n + 1, n + horizon + 1),
        mean=samples.mean(axis=0),
        median=med,
        lower=lo,
        upper=hi,
        variance=samples.var(axis=0, ddof=1),
        point=point,
        point_median=np.median(point, axis=0),
        level=ci_level,
    )
