"""Prior structure: hyperparameters, log-densities, and the partial
autocorrelation reparameterisation of the amplitude AR coefficients.

The AR prior is declared on the partial-autocorrelation scale, where the
stationarity region is the box (-1, 1)^p; the coefficients phi are a derived
quantity via the Durbin-Levinson recursion. Frequencies get disjoint,
descending interval supports (built from periodogram peaks) so the posterior
cannot switch component labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from .model import ModelParameters

__all__ = [
    "BetaInterval",
    "NormalPrior",
    "GammaPrior",
    "PriorSpec",
    "beta_on_interval_logpdf",
    "pacf_to_ar",
    "ar_to_pacf",
    "log_prior",
    "frequency_supports_from_peaks",
    "default_prior_spec",
]


def beta_on_interval_logpdf(x: float, b: float, c: float, lo: float, hi: float) -> float:
    """Log-density of a Beta(b, c) variable rescaled to the open interval (lo, hi).

    -inf outside the support. The normalizer (hi-lo)^{-b} is correct for
    this algebraic form (the c-part is expressed relative to the interval
    width, which keeps it normalized); the quadrature test asserts the
    density integrates to one.
    """
    if not (lo < x < hi):
        return -math.inf
    width = hi - lo
    u = (x - lo) / width
    return (-b * math.log(width) + (b - 1.0) * math.log(x - lo)
            + (c - 1.0) * math.log1p(-u) - betaln(b, c))


@dataclass
class BetaInterval:
    """Beta(b, c) prior rescaled to (lo, hi)."""

    b: float
    c: float
    lo: float
    hi: float

    def validate(self) -> list:
        v = []
        if not (self.b > 0 and self.c > 0):
            v.append(f"Beta shape parameters must be positive, got ({self.b}, {self.c})")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            v.append(f"interval bounds must be finite with lo < hi, got ({self.lo}, {self.hi})")
        return v

    def logpdf(self, x: float) -> float:
        return beta_on_interval_logpdf(x, self.b, self.c, self.lo, self.hi)

    @property
    def support(self):
        return (self.lo, self.hi)


@dataclass
class NormalPrior:
    """Normal prior with mean/variance hyperparameters."""

    mean: float
    var: float

    def validate(self) -> list:
        return [] if self.var > 0 and math.isfinite(self.mean) else [
            f"Normal prior needs finite mean and positive variance, got ({self.mean}, {self.var})"
        ]

    def logpdf(self, x: float) -> float:
        return -0.5 * math.log(2.0 * math.pi * self.var) - 0.5 * (x - self.mean) ** 2 / self.var


@dataclass
class GammaPrior:
    """Gamma prior in the mean-a*b parameterisation: mean a*b, variance a*b^2."""

    shape: float
    scale: float

    def validate(self) -> list:
        return [] if self.shape > 0 and self.scale > 0 else [
            f"Gamma hyperparameters must be positive, got ({self.shape}, {self.scale})"
        ]

    def logpdf(self, x: float) -> float:
        if x <= 0.0:
            return -math.inf
        return ((self.shape - 1.0) * math.log(x) - x / self.scale
                - self.shape * math.log(self.scale) - gammaln(self.shape))


# ---------------------------------------------------------------------------
# Partial autocorrelation <-> AR coefficients (Durbin-Levinson)
# ---------------------------------------------------------------------------


def pacf_to_ar(rho: np.ndarray) -> np.ndarray:
    """Map partial autocorrelations in (-1, 1)^p to stationary AR coefficients.

    Forward Durbin-Levinson recursion; a bijection onto the stationarity
    region.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(np.abs(rho) >= 1.0):
        raise ValueError("partial autocorrelations must lie strictly inside (-1, 1)")
    phi = np.zeros(0)
    for i in range(1, rho.size + 1):
        prev = phi
        phi = np.empty(i)
        phi[i - 1] = rho[i - 1]
        for j in range(i - 1):
            phi[j] = prev[j] - rho[i - 1] * prev[i - 2 - j]
    return phi


def ar_to_pacf(phi: np.ndarray) -> np.ndarray:
    """Inverse of `pacf_to_ar`; fails on non-stationary coefficients."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float)).copy()
    p = phi.size
    rho = np.empty(p)
    work = phi
    for i in range(p, 0, -1):
        r_i = work[i - 1]
        rho[i - 1] = r_i
        if abs(r_i) >= 1.0:
            raise ValueError("phi defines a non-stationary AR process")
        if i > 1:
            denom = 1.0 - r_i * r_i
            prev = np.empty(i - 1)
            for j in range(i - 1):
                prev[j] = (work[j] + r_i * work[i - 2 - j]) / denom
            work = prev
    return rho


# ---------------------------------------------------------------------------
# Full prior specification
# ---------------------------------------------------------------------------


@dataclass
class PriorSpec:
    """Hyperparameters of every prior block.

    One BetaInterval per frequency and per phase shift; the Normal priors
    for q, beta and the A initial conditions are shared across their
    coordinates, as is the rho prior across partial autocorrelations.
    """

    lambda_priors: list
    p_priors: list
    a_prior: NormalPrior
    q_prior: NormalPrior
    beta_prior: NormalPrior
    A_init_prior: NormalPrior
    alphaA_prior: BetaInterval
    alphaP_prior: BetaInterval
    omega_prior: GammaPrior
    rho_prior: BetaInterval

    @property
    def k(self) -> int:
        return len(self.lambda_priors)

    def validate(self) -> list:
        v = []
        if len(self.p_priors) != self.k:
            v.append("lambda_priors and p_priors must have equal length")
        for j, bp in enumerate(self.lambda_priors):
            v += [f"lambda prior {j + 1}: {msg}" for msg in bp.validate()]
            if not (0.0 < bp.lo and bp.hi <= math.pi):
                v.append(f"lambda prior {j + 1}: support must lie inside (0, pi)")
        for j, bp in enumerate(self.p_priors):
            v += [f"p prior {j + 1}: {msg}" for msg in bp.validate()]
        for name in ("a_prior", "q_prior", "beta_prior", "A_init_prior",
                     "alphaA_prior", "alphaP_prior", "omega_prior", "rho_prior"):
            v += [f"{name}: {msg}" for msg in getattr(self, name).validate()]
        # descending, pairwise disjoint frequency supports (identification)
        for j in range(self.k - 1):
            if not self.lambda_priors[j].lo > self.lambda_priors[j + 1].hi:
                v.append(
                    f"frequency supports must be disjoint and descending: "
                    f"support {j + 1} lower bound {self.lambda_priors[j].lo:g} must exceed "
                    f"support {j + 2} upper bound {self.lambda_priors[j + 1].hi:g}"
                )
        # each phase-shift support must span at least pi / lambda_lower
        for j, (lp, pp) in enumerate(zip(self.lambda_priors, self.p_priors)):
            if lp.lo > 0 and (pp.hi - pp.lo) < math.pi / lp.lo - 1e-12:
                v.append(
                    f"phase-shift support {j + 1} width {pp.hi - pp.lo:g} is below "
                    f"pi/lambda_lower = {math.pi / lp.lo:g}"
                )
        if not (-1.0 <= self.rho_prior.lo and self.rho_prior.hi <= 1.0):
            v.append("rho support must be contained in (-1, 1)")
        return v

    def p_supports(self):
        return [bp.support for bp in self.p_priors]


def log_prior(params: ModelParameters, spec: PriorSpec) -> float:
    """Joint log prior; -inf as soon as any component leaves its support.

    The AR block is evaluated on the partial-autocorrelation scale with no
    Jacobian term: the prior is declared on that scale and the sampler also
    proposes on it.
    """
    total = 0.0
    for j in range(params.k):
        total += spec.lambda_priors[j].logpdf(params.lam[j])
        total += spec.p_priors[j].logpdf(params.p_shift[j])
        if total == -math.inf:
            return -math.inf
    total += spec.a_prior.logpdf(params.a)
    for q_j in params.q:
        total += spec.q_prior.logpdf(q_j)
    for b_i in params.beta:
        total += spec.beta_prior.logpdf(b_i)
    for a_j in params.a_init:
        total += spec.A_init_prior.logpdf(a_j)
    total += spec.alphaA_prior.logpdf(params.alpha_A)
    total += spec.alphaP_prior.logpdf(params.alpha_P)
    total += spec.omega_prior.logpdf(params.omega)
    if total == -math.inf:
        return -math.inf
    try:
        rho = ar_to_pacf(params.phi)
    except ValueError:
        return -math.inf
    for r_i in rho:
        total += spec.rho_prior.logpdf(r_i)
    return total


# ---------------------------------------------------------------------------
# Default construction
# ---------------------------------------------------------------------------


def frequency_supports_from_peaks(peaks, half_width_frac: float = 0.25,
                                  gap: float = 1e-6):
    """Disjoint descending (lo, hi) supports around periodogram peaks.

    Each support is peak * (1 -/+ half_width_frac), clipped to (0, pi) and
    shrunk at shared boundaries (midpoint between adjacent peaks) so that
    lo_j > hi_{j+1} strictly.
    """
    peaks = np.sort(np.asarray(peaks, dtype=float))[::-1]
    if np.unique(peaks).size < peaks.size:
        raise ValueError("peak frequencies must be distinct")
    k = peaks.size
    lows = peaks * (1.0 - half_width_frac)
    highs = peaks * (1.0 + half_width_frac)
    highs[0] = min(highs[0], math.pi * (1.0 - 1e-9))
    lows[-1] = max(lows[-1], peaks[-1] * 1e-3)
    for j in range(k - 1):
        boundary = 0.5 * (peaks[j] + peaks[j + 1])
        lows[j] = max(lows[j], boundary + 0.5 * gap)
        highs[j + 1] = min(highs[j + 1], boundary - 0.5 * gap)
    supports = list(zip(lows.tolist(), highs.tolist()))
    for j, (lo, hi) in enumerate(supports):
        if not lo < hi:
            raise ValueError(
                f"cannot build a valid support around peak {peaks[j]:g}: "
                "peaks are too close together"
            )
    return supports


def default_prior_spec(k: int, p: int, r: int, lambda_supports) -> PriorSpec:
    """Weakly informative defaults around given frequency supports.

    Uniform Beta(1, 1) on every interval-supported parameter; Normal(0, 100)
    on a, q and beta; Normal(0, 1) on the A initial conditions; Gamma(2, 1)
    on omega; loadings confined to (0, 1) (positive sign resolves the
    reflection symmetry); phase-shift supports (-pi/lo_j, pi/lo_j).
    """
    if len(lambda_supports) != k:
        raise ValueError(f"need {k} frequency supports, got {len(lambda_supports)}")
    lambda_priors = [BetaInterval(1.0, 1.0, lo, hi) for lo, hi in lambda_supports]
    p_priors = [
        BetaInterval(1.0, 1.0, -math.pi / lo, math.pi / lo) for lo, _ in lambda_supports
    ]
    return PriorSpec(
        lambda_priors=lambda_priors,
        p_priors=p_priors,
        a_prior=NormalPrior(0.0, 100.0),
        q_prior=NormalPrior(0.0, 100.0),
        beta_prior=NormalPrior(0.0, 100.0),
        A_init_prior=NormalPrior(0.0, 1.0),
        alphaA_prior=BetaInterval(1.0, 1.0, 0.0, 1.0),
        alphaP_prior=BetaInterval(1.0, 1.0, 0.0, 1.0),
        omega_prior=GammaPrior(2.0, 1.0),
        rho_prior=BetaInterval(1.0, 1.0, -1.0, 1.0),
    )
