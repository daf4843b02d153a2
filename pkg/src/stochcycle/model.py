"""Core multi-frequency stochastic cycle model.

Observation/state recursion (single shared innovation):

    y_t = (a + A_{t-1}) * sum_j q_j sin(lambda_j (t + p_j + P_{t-1})) + mu(t) + eps_t
    A_t = phi_1 A_{t-1} + ... + phi_p A_{t-p} + alpha_A eps_t
    P_t = psi_P P_{t-1} + alpha_P eps_t

with q_1 = 1, P_0 = 0, eps_t ~ N(0, 1/omega), and polynomial trend
mu(t) = beta_0 + beta_1 (t/n) + ... + beta_r (t/n)^r.

`simulate` and `filter_path` run the identical recursion kernel so that
filtering a simulated series reproduces its latent path to rounding error.
Sine arguments are reduced modulo the per-frequency period before evaluation
to bound the rounding error of long recursions; accuracy is guaranteed for
series lengths up to roughly n = 5000 (soft cap, see README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


__all__ = [
    "ModelParameters",
    "TimeSeries",
    "LatentPath",
    "ValidityReport",
    "validate",
    "trend",
    "trend_vector",
    "conditional_mean",
    "filter_path",
    "log_likelihood",
    "simulate",
    "param_names",
    "params_to_record",
    "params_from_record",
    "as_generator",
]

TWO_PI = 2.0 * math.pi


def as_generator(rng) -> np.random.Generator:
    """Coerce None, an integer seed, or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class TimeSeries:
    """Observed series plus its sampling frequency (4 = quarterly)."""

    values: np.ndarray
    periods_per_year: int = 4

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size < 1:
            raise ValueError("time series must contain at least one observation")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time series contains non-finite values")
        if self.periods_per_year < 1:
            raise ValueError("periods_per_year must be a positive integer")

    @property
    def n(self) -> int:
        return self.values.size


@dataclass
class ModelParameters:
    """Full parameter vector of the cycle model.

    Fields
    ------
    a : baseline amplitude.
    q : relative amplitudes q_2..q_k (q_1 = 1 is implied, never stored;
        empty for k = 1).
    lam : angular frequencies in (0, pi), one per cycle component.
    p_shift : phase shifts p_1..p_k.
    beta : polynomial trend coefficients beta_0..beta_r.
    phi : AR(p) coefficients of the amplitude-deviation process.
    alpha_A, alpha_P : innovation loadings of A_t and P_t.
    psi_P : phase-shift AR coefficient in (-1, 1]; 1 = random walk
        (the only case supported for estimation).
    omega : error precision, omega = 1/sigma^2.
    a_init : initial conditions A_0, A_{-1}, ..., A_{-p+1}.
    """

    a: float
    q: np.ndarray
    lam: np.ndarray
    p_shift: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    alpha_A: float
    alpha_P: float
    omega: float
    a_init: np.ndarray
    psi_P: float = 1.0

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float)) if np.size(self.q) else np.empty(0)
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        self.p_shift = np.atleast_1d(np.asarray(self.p_shift, dtype=float))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        self.a_init = np.atleast_1d(np.asarray(self.a_init, dtype=float))
        self.a = float(self.a)
        self.alpha_A = float(self.alpha_A)
        self.alpha_P = float(self.alpha_P)
        self.omega = float(self.omega)
        self.psi_P = float(self.psi_P)

    @property
    def k(self) -> int:
        return self.lam.size

    @property
    def p(self) -> int:
        return self.phi.size

    @property
    def r(self) -> int:
        return self.beta.size - 1

    @property
    def sigma2(self) -> float:
        return 1.0 / self.omega

    @property
    def q_full(self) -> np.ndarray:
        """Relative amplitudes including the implied q_1 = 1."""
        return np.concatenate(([1.0], self.q))

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            a=self.a,
            q=self.q.copy(),
            lam=self.lam.copy(),
            p_shift=self.p_shift.copy(),
            beta=self.beta.copy(),
            phi=self.phi.copy(),
            alpha_A=self.alpha_A,
            alpha_P=self.alpha_P,
            omega=self.omega,
            a_init=self.a_init.copy(),
            psi_P=self.psi_P,
        )


@dataclass
class LatentPath:
    """Latent trajectories for t = 1..n (index 0 holds t = 1)."""

    A: np.ndarray
    P: np.ndarray
    eps: np.ndarray
    m: np.ndarray


@dataclass
class ValidityReport:
    """Constraint-check result; never raised, inspect `violations`."""

    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def ar_is_stationary(phi: np.ndarray) -> bool:
    """True when 1 - phi_1 L - ... - phi_p L^p has all roots outside the unit circle."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if not np.all(np.isfinite(phi)):
        return False
    if np.allclose(phi, 0.0):
        return True
    # companion-polynomial inverse roots must lie strictly inside the unit circle
    roots = np.roots(np.concatenate(([1.0], -phi)))
    return bool(np.all(np.abs(roots) < 1.0))


def validate(params: ModelParameters, k: int = None, p: int = None,
             r: int = None, p_support=None) -> ValidityReport:
    """Check the parameter point against its support constraints.

    Returns a report object (never throws). Dimension arguments, when
    given, are cross-checked against the stored vectors. `p_support`,
    when given, is a sequence of (lo, hi) pairs bounding each phase
    shift (the bounds live in the prior specification).
    """
    v = []
    if k is not None and params.k != k:
        v.append(f"expected k={k} frequencies, got {params.k}")
    if p is not None and params.p != p:
        v.append(f"expected AR order p={p}, got {params.p}")
    if r is not None and params.r != r:
        v.append(f"expected trend degree r={r}, got {params.r}")
    if params.q.size != params.k - 1:
        v.append(f"q must have k-1={params.k - 1} entries, got {params.q.size}")
    if params.p_shift.size != params.k:
        v.append(f"p_shift must have k={params.k} entries, got {params.p_shift.size}")
    if params.a_init.size != params.p:
        v.append(f"a_init must have p={params.p} entries, got {params.a_init.size}")

    for name in ("a", "alpha_A", "alpha_P", "omega", "psi_P"):
        if not math.isfinite(getattr(params, name)):
            v.append(f"{name} is not finite")
    for name in ("q", "lam", "p_shift", "beta", "phi", "a_init"):
        if not np.all(np.isfinite(getattr(params, name))):
            v.append(f"{name} contains non-finite values")

    if np.any(params.lam <= 0.0) or np.any(params.lam >= math.pi):
        v.append("frequencies must lie strictly inside (0, pi)")
    if params.lam.size != np.unique(params.lam).size:
        v.append("frequencies must be pairwise distinct")
    if not ar_is_stationary(params.phi):
        v.append("phi defines a non-stationary AR process")
    if not params.omega > 0.0:
        v.append("omega must be strictly positive")
    if not (-1.0 < params.psi_P <= 1.0):
        v.append("psi_P must lie in (-1, 1]")
    if p_support is not None:
        for j, (lo, hi) in enumerate(p_support):
            if not (lo < params.p_shift[j] < hi):
                v.append(f"p_shift[{j}] = {params.p_shift[j]:g} outside support ({lo:g}, {hi:g})")
    return ValidityReport(v)


# ---------------------------------------------------------------------------
# Trend and conditional mean
# ---------------------------------------------------------------------------


def trend(t: int, n: int, beta: np.ndarray) -> float:
    """Polynomial trend beta_0 + beta_1 (t/n) + ... + beta_r (t/n)^r."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    x = t / n
    acc = 0.0
    for b in beta[::-1]:
        acc = acc * x + b
    return float(acc)


def trend_vector(n: int, beta: np.ndarray, t_start: int = 1, length: int = None) -> np.ndarray:
    """Trend evaluated at t = t_start .. t_start+length-1 (default: 1..n)."""
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    if length is None:
        length = n - t_start + 1
    x = (t_start + np.arange(length, dtype=float)) / n
    acc = np.zeros(length)
    for b in beta[::-1]:
        acc = acc * x + b
    return acc


def _reduced_sin_sum(t: float, P_prev: float, lam: np.ndarray, q_full: np.ndarray,
                     p_shift: np.ndarray) -> float:
    # reduce t + p_j + P modulo the period 2*pi/lambda_j before sin()
    s = 0.0
    for j in range(lam.size):
        u = (t + p_shift[j] + P_prev) % (TWO_PI / lam[j])
        s += q_full[j] * math.sin(lam[j] * u)
    return s


def conditional_mean(params: ModelParameters, t: int, A_prev: float,
                     P_prev: float, n: int) -> float:
    """One-step conditional mean m_t given the lagged state (A_{t-1}, P_{t-1})."""
    s = _reduced_sin_sum(float(t), P_prev, params.lam, params.q_full, params.p_shift)
    return trend(t, n, params.beta) + (params.a + A_prev) * s


# ---------------------------------------------------------------------------
# Shared recursion kernel
# ---------------------------------------------------------------------------


@njit(cache=True)
def _recursion_kernel(series, filter_mode, mu, a, q_full, lam, periods,
                      p_shift, phi, alpha_A, alpha_P, psi_P, a_init):
    # filter_mode: series holds y, innovations are recovered.
    # otherwise:   series holds eps, observations are generated.
    n = series.shape[0]
    k = lam.shape[0]
    p = phi.shape[0]
    y = np.empty(n)
    A = np.empty(n)
    P = np.empty(n)
    eps = np.empty(n)
    m = np.empty(n)
    lag = a_init.copy()  # lag[i] = A_{t-1-i}
    P_prev = 0.0
    for t in range(1, n + 1):
        s = 0.0
        for j in range(k):
            u = (t + p_shift[j] + P_prev) % periods[j]
            s += q_full[j] * math.sin(lam[j] * u)
        mt = mu[t - 1] + (a + lag[0]) * s
        if filter_mode:
            e = series[t - 1] - mt
            yt = series[t - 1]
        else:
            e = series[t - 1]
            yt = mt + e
        A_new = alpha_A * e
        for i in range(p):
            A_new += phi[i] * lag[i]
        P_new = psi_P * P_prev + alpha_P * e
        for i in range(p - 1, 0, -1):
            lag[i] = lag[i - 1]
        lag[0] = A_new
        y[t - 1] = yt
        A[t - 1] = A_new
        P[t - 1] = P_new
        eps[t - 1] = e
        m[t - 1] = mt
        P_prev = P_new
    return y, A, P, eps, m


def _run_kernel(params: ModelParameters, series: np.ndarray, filter_mode: bool,
                n_for_trend: int):
    mu = trend_vector(n_for_trend, params.beta, t_start=1, length=series.size)
    periods = TWO_PI / params.lam
    return _recursion_kernel(
        np.ascontiguousarray(series, dtype=float),
        filter_mode,
        mu,
        params.a,
        params.q_full,
        params.lam.astype(float),
        periods,
        params.p_shift.astype(float),
        params.phi.astype(float),
        params.alpha_A,
        params.alpha_P,
        params.psi_P,
        params.a_init.astype(float),
    )


# ---------------------------------------------------------------------------
# Filtering, likelihood, simulation
# ---------------------------------------------------------------------------


def filter_path(params: ModelParameters, y: TimeSeries) -> LatentPath:
    """Recover the latent path (A, P, eps, m) implied by an observed series.

    Runs the model recursion forward: at each t the lagged state gives
    m_t, the residual eps_t = y_t - m_t, and the state updates.
    """
    report = validate(params)
    if not report.ok:
        raise ValueError("invalid parameters: " + "; ".join(report.violations))
    _, A, P, eps, m = _run_kernel(params, y.values, True, y.n)
    return LatentPath(A=A, P=P, eps=eps, m=m)


def _sse_and_n(params: ModelParameters, y: TimeSeries):
    # fast path used by the sampler: no validation, residual sum of squares only
    _, _, _, eps, _ = _run_kernel(params, y.values, True, y.n)
    return float(np.dot(eps, eps)), y.n


def log_likelihood(params: ModelParameters, y: TimeSeries) -> float:
    """Exact Gaussian log-likelihood via the recursive one-step decomposition.

    Returns -inf for parameter points outside the support (non-stationary
    phi, omega <= 0, coincident frequencies), which is what the sampler
    relies on.
    """
    if not validate(params).ok:
        return -math.inf
    sse, n = _sse_and_n(params, y)
    if not math.isfinite(sse):
        return -math.inf
    return -0.5 * n * math.log(TWO_PI / params.omega) - 0.5 * params.omega * sse


def simulate(params: ModelParameters, n: int, rng=None, innovations=None,
             periods_per_year: int = 4):
    """Draw a series of length n from the model.

    Innovations are N(0, 1/omega) draws unless an explicit vector is
    supplied (common-random-number oracle tests). Returns the series and
    its latent path; `filter_path` applied to the output reproduces the
    path to rounding error.
    """
    report = validate(params)
    if not report.ok:
        raise ValueError("invalid parameters: " + "; ".join(report.violations))
    if n < 1:
        raise ValueError("n must be >= 1")
    if innovations is None:
        gen = as_generator(rng)
        eps = gen.normal(0.0, math.sqrt(params.sigma2), size=n)
    else:
        eps = np.asarray(innovations, dtype=float).ravel()
        if eps.size != n:
            raise ValueError(f"innovations must have length {n}, got {eps.size}")
    y, A, P, eps_out, m = _run_kernel(params, eps, False, n)
    return TimeSeries(y, periods_per_year), LatentPath(A=A, P=P, eps=eps_out, m=m)


# ---------------------------------------------------------------------------
# Flat record serialization (canonical field names)
# ---------------------------------------------------------------------------


def param_names(k: int, p: int, r: int) -> list:
    """Canonical ordered names: a, q2..qk, lambda1..k, p1..k, beta0..r,
    phi1..p, alphaA, alphaP, omega, A0..A_{1-p}."""
    names = ["a"]
    names += [f"q{j}" for j in range(2, k + 1)]
    names += [f"lambda{j}" for j in range(1, k + 1)]
    names += [f"p{j}" for j in range(1, k + 1)]
    names += [f"beta{i}" for i in range(r + 1)]
    names += [f"phi{i}" for i in range(1, p + 1)]
    names += ["alphaA", "alphaP", "omega"]
    names += [f"A{1 - j}" for j in range(1, p + 1)]
    return names


def params_to_vector(params: ModelParameters) -> np.ndarray:
    """Parameter values in canonical order (matches `param_names`)."""
    return np.concatenate([
        [params.a], params.q, params.lam, params.p_shift, params.beta,
        params.phi, [params.alpha_A, params.alpha_P, params.omega], params.a_init,
    ])


def params_from_vector(vec: np.ndarray, k: int, p: int, r: int,
                       psi_P: float = 1.0) -> ModelParameters:
    vec = np.asarray(vec, dtype=float).ravel()
    expected = 1 + (k - 1) + k + k + (r + 1) + p + 3 + p
    if vec.size != expected:
        raise ValueError(f"expected vector of length {expected}, got {vec.size}")
    pos = 0

    def take(count):
        nonlocal pos
        out = vec[pos:pos + count]
        pos += count
        return out

    a = take(1)[0]
    q = take(k - 1)
    lam = take(k)
    p_shift = take(k)
    beta = take(r + 1)
    phi = take(p)
    alpha_A, alpha_P, omega = take(3)
    a_init = take(p)
    return ModelParameters(a=a, q=q, lam=lam, p_shift=p_shift, beta=beta, phi=phi,
                           alpha_A=alpha_A, alpha_P=alpha_P, omega=omega,
                           a_init=a_init, psi_P=psi_P)


def params_to_record(params: ModelParameters) -> dict:
    """Flat key-value record with canonical names plus psiP."""
    rec = dict(zip(param_names(params.k, params.p, params.r),
                   params_to_vector(params)))
    rec = {name: float(val) for name, val in rec.items()}
    rec["psiP"] = params.psi_P
    return rec


def params_from_record(record: dict, k: int = None, p: int = None,
                       r: int = None) -> ModelParameters:
    """Rebuild parameters from a flat record; dimensions inferred from keys
    unless given. A missing psiP defaults to 1 (random-walk phase)."""
    if k is None:
        k = sum(1 for key in record if key.startswith("lambda"))
    if p is None:
        p = sum(1 for key in record if key.startswith("phi"))
    if r is None:
        r = sum(1 for key in record if key.startswith("beta")) - 1
    names = param_names(k, p, r)
    missing = [name for name in names if name not in record]
    if missing:
        raise KeyError(f"record is missing parameter fields: {missing}")
    vec = np.array([float(record[name]) for name in names])
    return params_from_vector(vec, k, p, r, psi_P=float(record.get("psiP", 1.0)))
