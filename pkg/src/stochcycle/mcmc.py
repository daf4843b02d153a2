"""Posterior sampler: Gibbs step for the error precision combined with
adaptive block random-walk Metropolis-Hastings for every other parameter.

The precision omega is the one parameter with a conjugate (Gamma) full
conditional, so it gets a Gibbs draw each sweep. All remaining parameters
move on an unconstrained sampling scale: interval-supported coordinates
(frequencies, phase shifts, loadings, partial autocorrelations) through a
scaled log-odds map whose Jacobian enters the acceptance ratio, unbounded
coordinates as-is. Proposals are multivariate Student-t random walks whose
scale follows a Robbins-Monro recursion toward a target acceptance rate and
whose covariance is refreshed from the burn-in history; adaptation freezes
at the end of burn-in.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import (
    ModelParameters,
    TimeSeries,
    _sse_and_n,
    param_names,
    params_from_vector,
    params_to_vector,
    validate,
)
from .priors import PriorSpec, ar_to_pacf, log_prior, pacf_to_ar

__all__ = [
    "SamplerConfig",
    "ChainOutput",
    "default_blocks",
    "gibbs_omega",
    "ParamTransform",
    "transform_to_sampling_scale",
    "transform_back",
    "rwmh_step",
    "adapt_scale",
    "adapt_covariance",
    "sample_mh",
    "run_chain",
    "run_chains",
    "effective_sample_size",
    "split_rhat",
    "chain_to_csv",
    "chain_to_npz",
    "chain_from_npz",
    "initial_parameters",
]


# ---------------------------------------------------------------------------
# Configuration and output containers
# ---------------------------------------------------------------------------


@dataclass
class SamplerConfig:
    """Sampler settings; the iteration counts default to the conservative
    long-burn-in regime and are meant to be dialed down for small problems."""

    n_iterations: int = 300_000
    n_burnin: int = 200_000
    thin: int = 10
    n_chains: int = 2
    proposal_dof: float = 5.0
    target_acceptance: float = None  # None: 0.234 for blocks, 0.44 for scalars
    adapt_window: int = 1000
    rng_seed: int = 0
    block_spec: list = None  # list of lists of canonical names; None -> default

    def validate(self) -> list:
        v = []
        if self.n_burnin >= self.n_iterations:
            v.append("n_burnin must be smaller than n_iterations")
        if self.n_burnin < 0:
            v.append("n_burnin must be non-negative")
        if self.thin < 1:
            v.append("thin must be >= 1")
        if self.n_chains < 1:
            v.append("n_chains must be >= 1")
        if not self.proposal_dof > 0:
            v.append("proposal_dof must be positive")
        if self.target_acceptance is not None and not (0.0 < self.target_acceptance < 1.0):
            v.append("target_acceptance must lie in (0, 1)")
        if self.adapt_window < 10:
            v.append("adapt_window must be >= 10")
        return v

    @property
    def n_kept(self) -> int:
        return (self.n_iterations - self.n_burnin) // self.thin


@dataclass
class ChainOutput:
    """Kept draws plus sampler bookkeeping.

    `draws` holds natural-scale values in canonical column order (omega
    included); `draws_sampling` the same rows on the sampling scale (omega
    column passed through untouched, it is never transformed).
    """

    param_names: list
    draws: np.ndarray
    draws_sampling: np.ndarray
    log_posterior_trace: np.ndarray
    acceptance_rates: dict
    diagnostics: dict
    rng_seed: int
    k: int
    p: int
    r: int
    final_state: dict = None  # sampler state snapshot enabling resumption

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.param_names.index(name)]

    def params_at(self, row: int) -> ModelParameters:
        return params_from_vector(self.draws[row], self.k, self.p, self.r)


def default_blocks(k: int, p: int, r: int) -> list:
    """Seven-block default update scheme over the canonical names."""
    return [
        [f"lambda{j}" for j in range(1, k + 1)],
        [f"p{j}" for j in range(1, k + 1)],
        ["a"] + [f"q{j}" for j in range(2, k + 1)],
        [f"beta{i}" for i in range(r + 1)],
        [f"phi{i}" for i in range(1, p + 1)],
        ["alphaA", "alphaP"],
        [f"A{1 - j}" for j in range(1, p + 1)],
    ]


def single_block(k: int, p: int, r: int) -> list:
    names = [n for n in param_names(k, p, r) if n != "omega"]
    return [names]


# ---------------------------------------------------------------------------
# Gibbs update for the precision
# ---------------------------------------------------------------------------


def gibbs_omega(params: ModelParameters, y, prior: PriorSpec, rng) -> float:
    """Draw omega from its conditional Gamma given the current residuals.

    Conjugacy: Gamma(a, b) prior (mean a*b) plus n Gaussian one-step
    densities gives shape a + n/2 and scale 1/(1/b + sse/2). With no data
    the draw comes from the prior.
    """
    if y is None or (isinstance(y, TimeSeries) and y.n == 0):
        sse, n = 0.0, 0
    else:
        sse, n = _sse_and_n(params, y)
    shape = prior.omega_prior.shape + 0.5 * n
    rate = 1.0 / prior.omega_prior.scale + 0.5 * sse
    return float(rng.gamma(shape, 1.0 / rate))


# ---------------------------------------------------------------------------
# Sampling-scale transform
# ---------------------------------------------------------------------------


def _logodds(x, lo, hi):
    if not (lo < x < hi):
        raise ValueError(f"value {x:g} is not strictly inside ({lo:g}, {hi:g})")
    return math.log(x - lo) - math.log(hi - x)


def _inv_logodds(z, lo, hi):
    return lo + (hi - lo) * float(expit(z))


def _logodds_jacobian(z, lo, hi):
    # log d(inv_logodds)/dz = log(hi-lo) - softplus(z) - softplus(-z)
    return math.log(hi - lo) - float(np.logaddexp(0.0, z)) - float(np.logaddexp(0.0, -z))


class ParamTransform:
    """Bijection between the natural parameter vector (omega excluded) and
    an unconstrained sampling vector.

    Interval-supported coordinates use the scaled log-odds map with bounds
    taken from the prior; the AR block passes through the partial
    autocorrelations (prior scale) before the log-odds map; everything else
    is the identity.
    """

    def __init__(self, k: int, p: int, r: int, prior: PriorSpec):
        self.k, self.p, self.r = k, p, r
        self.prior = prior
        self.all_names = param_names(k, p, r)
        self.names = [n for n in self.all_names if n != "omega"]
        self.dim = len(self.names)
        self._bounds = {}
        for j in range(1, k + 1):
            self._bounds[f"lambda{j}"] = prior.lambda_priors[j - 1].support
            self._bounds[f"p{j}"] = prior.p_priors[j - 1].support
        self._bounds["alphaA"] = prior.alphaA_prior.support
        self._bounds["alphaP"] = prior.alphaP_prior.support
        for i in range(1, p + 1):
            self._bounds[f"phi{i}"] = prior.rho_prior.support
        self._phi_slice = slice(self.names.index("phi1"),
                                self.names.index("phi1") + p)

    def to_sampling(self, params: ModelParameters) -> np.ndarray:
        full = dict(zip(self.all_names, params_to_vector(params)))
        rho = ar_to_pacf(params.phi)
        z = np.empty(self.dim)
        for i, name in enumerate(self.names):
            if name.startswith("phi"):
                lo, hi = self._bounds[name]
                z[i] = _logodds(rho[int(name[3:]) - 1], lo, hi)
            elif name in self._bounds:
                lo, hi = self._bounds[name]
                z[i] = _logodds(full[name], lo, hi)
            else:
                z[i] = full[name]
        return z

    def to_natural(self, z: np.ndarray, omega: float,
                   psi_P: float = 1.0) -> ModelParameters:
        vals = np.empty(self.dim)
        for i, name in enumerate(self.names):
            if name in self._bounds:
                lo, hi = self._bounds[name]
                vals[i] = _inv_logodds(z[i], lo, hi)
            else:
                vals[i] = z[i]
        vals[self._phi_slice] = pacf_to_ar(vals[self._phi_slice])
        vec = np.empty(self.dim + 1)
        omega_pos = self.all_names.index("omega")
        vec[:omega_pos] = vals[:omega_pos]
        vec[omega_pos] = omega
        vec[omega_pos + 1:] = vals[omega_pos:]
        return params_from_vector(vec, self.k, self.p, self.r, psi_P=psi_P)

    def log_jacobian(self, z: np.ndarray) -> float:
        total = 0.0
        for i, name in enumerate(self.names):
            if name in self._bounds:
                lo, hi = self._bounds[name]
                total += _logodds_jacobian(z[i], lo, hi)
        return total


def transform_to_sampling_scale(params: ModelParameters, prior: PriorSpec) -> np.ndarray:
    """Map a valid parameter point (omega excluded) to the sampling scale."""
    return ParamTransform(params.k, params.p, params.r, prior).to_sampling(params)


def transform_back(z: np.ndarray, prior: PriorSpec, k: int, p: int, r: int,
                   omega: float, psi_P: float = 1.0) -> ModelParameters:
    """Inverse of `transform_to_sampling_scale` for a given omega."""
    return ParamTransform(k, p, r, prior).to_natural(np.asarray(z, float), omega, psi_P)


# ---------------------------------------------------------------------------
# Metropolis-Hastings machinery
# ---------------------------------------------------------------------------


def rwmh_step(x: np.ndarray, logpost, current_lp: float, idx: np.ndarray,
              scale: float, chol: np.ndarray, dof: float, rng):
    """One block random-walk update with a multivariate Student-t proposal.

    Returns (x_new, lp_new, accepted). The proposal is symmetric, so the
    acceptance ratio is just the posterior ratio on the sampling scale
    (any Jacobian terms live inside `logpost`). Out-of-support proposals
    carry -inf log posterior and are rejected, never raised.
    """
    idx = np.asarray(idx, dtype=int)
    d = idx.size
    direction = chol @ rng.standard_normal(d)
    w = rng.chisquare(dof) / dof if math.isfinite(dof) else 1.0
    proposal = x.copy()
    proposal[idx] += scale * direction / math.sqrt(w)
    lp_prop = logpost(proposal)
    log_u = math.log(rng.random())
    if math.isfinite(lp_prop) and log_u < lp_prop - current_lp:
        return proposal, lp_prop, True
    return x, current_lp, False


def adapt_scale(scale: float, accepted: bool, target: float, iteration: int,
                max_step: float = 0.1) -> float:
    """Robbins-Monro scale recursion toward the target acceptance rate."""
    step = min(max_step, iteration ** -0.7)
    return scale * math.exp(step * ((1.0 if accepted else 0.0) - target))


def _regularize_cov(emp: np.ndarray, shrink: float = 0.05) -> np.ndarray:
    d = emp.shape[0]
    level = np.trace(emp) / d
    if not (level > 0 and np.isfinite(level)):
        return np.eye(d)
    return (1.0 - shrink) * emp + shrink * level * np.eye(d)


def adapt_covariance(history: np.ndarray, shrink: float = 0.05) -> np.ndarray:
    """Regularized empirical covariance of the burn-in history, shrunk
    toward the identity scaled to the average empirical variance.

    Scaling the identity keeps the regularization proportionate: posterior
    scales here span orders of magnitude across coordinates, and an
    unscaled identity would swamp the learned geometry and force
    near-isotropic proposals.
    """
    history = np.atleast_2d(np.asarray(history, float))
    d = history.shape[1]
    if history.shape[0] < max(4, d + 1):
        return np.eye(d)
    emp = np.cov(history.T, ddof=1).reshape(d, d)
    return _regularize_cov(emp, shrink)


class _RunningMoments:
    """Accumulates mean/covariance of the burn-in states so the proposal
    covariance can be refreshed from the whole history in O(d^2)."""

    def __init__(self, dim):
        self.count = 0
        self.s1 = np.zeros(dim)
        self.s2 = np.zeros((dim, dim))

    def update(self, x):
        self.count += 1
        self.s1 += x
        self.s2 += np.outer(x, x)

    def covariance(self):
        if self.count < 2:
            return None
        mean = self.s1 / self.count
        return (self.s2 - self.count * np.outer(mean, mean)) / (self.count - 1)


# mixture proposal: fraction of moves drawn from the adapted covariance; the
# remainder uses a fixed small isotropic step as an irreducibility floor so a
# badly adapted stream can never freeze permanently
_ADAPTIVE_FRACTION = 0.95
_FIXED_STEP_SD = 0.01


class _Block:
    def __init__(self, name, idx, target, dim):
        self.name = name
        self.idx = np.asarray(idx, dtype=int)
        self.target = target
        self.scale = 0.1 * 2.38 / math.sqrt(dim)
        self.chol = np.eye(dim)
        self.accepted_post = 0
        self.proposed_post = 0
        self.rm_iter = 0  # Robbins-Monro clock, restarted at each refresh

    def tune_scale(self):
        self.rm_iter += 1
        return self.rm_iter

    def refresh_covariance(self, history):
        self._set_proposal_cov(adapt_covariance(history))

    def refresh_from_full_cov(self, cov_full):
        emp = cov_full[np.ix_(self.idx, self.idx)]
        self._set_proposal_cov(_regularize_cov(emp))

    def _set_proposal_cov(self, cov):
        old_level = float(np.mean(np.sum(self.chol**2, axis=1)))
        jitter = 1e-12 * max(np.trace(cov) / cov.shape[0], 1e-12)
        for _ in range(8):
            try:
                self.chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
                break
            except np.linalg.LinAlgError:
                jitter *= 100.0
        else:
            self.chol = np.eye(cov.shape[0])
        # keep the effective step magnitude continuous across the refresh,
        # then let the restarted Robbins-Monro recursion retune from there
        new_level = float(np.mean(np.sum(self.chol**2, axis=1)))
        if new_level > 0 and old_level > 0:
            self.scale = min(100.0, max(1e-6, self.scale * math.sqrt(old_level / new_level)))
        self.rm_iter = 0


def _resolve_target(explicit, dim):
    if explicit is not None:
        return explicit
    return 0.44 if dim == 1 else 0.234


def sample_mh(logpost, x0: np.ndarray, n_iterations: int, n_burnin: int,
              rng, thin: int = 1, blocks: list = None, dof: float = 5.0,
              target_acceptance: float = None, adapt_window: int = 1000):
    """Generic adaptive random-walk sampler on a bare log-density.

    Drives the same block machinery as `run_chain` but with no model
    attached; used by the kernel-correctness oracles. `blocks` is a list of
    index arrays (default: one full block). Returns (draws, acceptance_rate,
    log-posterior trace).
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if blocks is None:
        blocks = [np.arange(d)]
    states = [_Block(str(i), idx, _resolve_target(target_acceptance, len(idx)), len(idx))
              for i, idx in enumerate(blocks)]
    lp = logpost(x)
    if not math.isfinite(lp):
        raise ValueError("initial point has non-finite log posterior")
    kept = (n_iterations - n_burnin) // thin
    draws = np.empty((kept, d))
    trace = np.empty(kept)
    moments = _RunningMoments(d)
    row = 0
    for it in range(1, n_iterations + 1):
        in_burnin = it <= n_burnin
        for blk in states:
            use_adaptive = rng.random() < _ADAPTIVE_FRACTION
            if use_adaptive:
                x, lp, accepted = rwmh_step(x, logpost, lp, blk.idx, blk.scale,
                                            blk.chol, dof, rng)
            else:
                d_blk = blk.idx.size
                x, lp, accepted = rwmh_step(x, logpost, lp, blk.idx,
                                            _FIXED_STEP_SD, np.eye(d_blk),
                                            math.inf, rng)
            if in_burnin:
                if use_adaptive:
                    blk.scale = adapt_scale(blk.scale, accepted, blk.target,
                                            blk.tune_scale())
            else:
                blk.proposed_post += 1
                blk.accepted_post += int(accepted)
        if in_burnin:
            moments.update(x)
            if (it % adapt_window == 0 and moments.count > 10 * d
                    and it <= 0.9 * n_burnin):
                cov = moments.covariance()
                for blk in states:
                    blk.refresh_from_full_cov(cov)
        elif (it - n_burnin) % thin == 0:
            draws[row] = x
            trace[row] = lp
            row += 1
    total_prop = sum(blk.proposed_post for blk in states)
    total_acc = sum(blk.accepted_post for blk in states)
    acc_rate = total_acc / total_prop if total_prop else math.nan
    return draws, acc_rate, trace


# ---------------------------------------------------------------------------
# Model chain
# ---------------------------------------------------------------------------


def _loglik_from_sse(omega: float, sse: float, n: int) -> float:
    if not math.isfinite(sse):
        return -math.inf
    return -0.5 * n * math.log(2.0 * math.pi / omega) - 0.5 * omega * sse


def run_chain(y: TimeSeries, prior: PriorSpec, config: SamplerConfig,
              init: ModelParameters, rng=None) -> ChainOutput:
    """Run one chain of the Gibbs-within-Metropolis sweep.

    Each iteration draws omega from its conditional Gamma, then updates
    every block of the remaining parameters with an adaptive Student-t
    random walk on the sampling scale. Deterministic given the seed.
    """
    problems = config.validate()
    if problems:
        raise ValueError("invalid sampler config: " + "; ".join(problems))
    spec_problems = prior.validate()
    if spec_problems:
        raise ValueError("invalid prior spec: " + "; ".join(spec_problems))
    k, p, r = init.k, init.p, init.r
    names = param_names(k, p, r)
    transform = ParamTransform(k, p, r, prior)
    block_names = config.block_spec if config.block_spec is not None else default_blocks(k, p, r)
    _check_blocks(block_names, transform.names)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(
        config.rng_seed if rng is None else rng)

    report = validate(init, k=k, p=p, r=r, p_support=prior.p_supports())
    if not report.ok:
        raise ValueError("invalid initial parameters: " + "; ".join(report.violations))

    z = transform.to_sampling(init)
    omega = init.omega
    params = transform.to_natural(z, omega)
    sse, n = _sse_and_n(params, y)
    loglik = _loglik_from_sse(omega, sse, n)
    logpri = log_prior(params, prior)
    jac = transform.log_jacobian(z)
    lp = loglik + logpri + jac
    if not math.isfinite(lp):
        raise ValueError("initial point has non-finite log posterior")

    blocks = []
    name_pos = {nm: i for i, nm in enumerate(transform.names)}
    for bnames in block_names:
        idx = [name_pos[nm] for nm in bnames]
        blocks.append(_Block("+".join(bnames), idx,
                             _resolve_target(config.target_acceptance, len(idx)),
                             len(idx)))

    omega_pos = names.index("omega")
    kept = config.n_kept
    draws = np.empty((kept, len(names)))
    draws_sampling = np.empty((kept, len(names)))
    trace = np.empty(kept)
    moments = _RunningMoments(transform.dim)
    row = 0

    a_shape0 = prior.omega_prior.shape
    b_scale = prior.omega_prior.scale

    for it in range(1, config.n_iterations + 1):
        in_burnin = it <= config.n_burnin

        # Gibbs: precision from its conditional Gamma (residuals unchanged)
        omega = float(rng.gamma(a_shape0 + 0.5 * n, 1.0 / (1.0 / b_scale + 0.5 * sse)))
        params.omega = omega
        loglik = _loglik_from_sse(omega, sse, n)
        logpri = log_prior(params, prior)
        lp = loglik + logpri + jac

        # block Metropolis-Hastings sweeps on the sampling scale
        for blk in blocks:
            d = blk.idx.size
            use_adaptive = rng.random() < _ADAPTIVE_FRACTION
            z_prop = z.copy()
            if use_adaptive:
                direction = blk.chol @ rng.standard_normal(d)
                w = rng.chisquare(config.proposal_dof) / config.proposal_dof
                z_prop[blk.idx] += blk.scale * direction / math.sqrt(w)
            else:
                z_prop[blk.idx] += _FIXED_STEP_SD * rng.standard_normal(d)
            try:
                # a saturated log-odds inverse can land exactly on a support
                # boundary; such proposals are out of support, not errors
                params_prop = transform.to_natural(z_prop, omega)
                sse_prop, _ = _sse_and_n(params_prop, y)
                loglik_prop = _loglik_from_sse(omega, sse_prop, n)
                logpri_prop = log_prior(params_prop, prior)
                jac_prop = transform.log_jacobian(z_prop)
                lp_prop = loglik_prop + logpri_prop + jac_prop
            except ValueError:
                lp_prop = -math.inf
            accepted = False
            if math.isfinite(lp_prop):
                if math.log(rng.random()) < lp_prop - lp:
                    accepted = True
                    z, params, sse = z_prop, params_prop, sse_prop
                    loglik, logpri, jac, lp = loglik_prop, logpri_prop, jac_prop, lp_prop
            else:
                rng.random()  # keep the draw count identical on reject
            if in_burnin:
                if use_adaptive:
                    blk.scale = adapt_scale(blk.scale, accepted, blk.target,
                                            blk.tune_scale())
            else:
                blk.proposed_post += 1
                blk.accepted_post += int(accepted)

        if in_burnin:
            moments.update(z)
            if (it % config.adapt_window == 0 and moments.count > 10 * transform.dim
                    and it <= 0.9 * config.n_burnin):
                cov = moments.covariance()
                for blk in blocks:
                    blk.refresh_from_full_cov(cov)
        elif (it - config.n_burnin) % config.thin == 0:
            draws[row] = params_to_vector(params)
            zrow = np.empty(len(names))
            zrow[:omega_pos] = z[:omega_pos]
            zrow[omega_pos] = omega
            zrow[omega_pos + 1:] = z[omega_pos:]
            draws_sampling[row] = zrow
            trace[row] = loglik + logpri  # natural-scale log posterior
            row += 1

    acceptance = {
        blk.name: (blk.accepted_post / blk.proposed_post if blk.proposed_post else math.nan)
        for blk in blocks
    }
    diagnostics = {
        "ess": {nm: effective_sample_size(draws[:, i]) for i, nm in enumerate(names)},
        "split_rhat": {nm: split_rhat([draws[:, i]]) for i, nm in enumerate(names)},
    }
    final_state = {
        "params": params_to_vector(params).tolist(),
        "z": z.tolist(),
        "sse": sse,
        "iteration": config.n_iterations,
        "block_scales": {blk.name: blk.scale for blk in blocks},
        "block_chols": {blk.name: blk.chol.tolist() for blk in blocks},
        "rng_state": rng.bit_generator.state,
    }
    return ChainOutput(
        param_names=names,
        draws=draws,
        draws_sampling=draws_sampling,
        log_posterior_trace=trace,
        acceptance_rates=acceptance,
        diagnostics=diagnostics,
        rng_seed=config.rng_seed,
        k=k, p=p, r=r,
        final_state=final_state,
    )


def _check_blocks(block_names, sampling_names):
    flat = [nm for blk in block_names for nm in blk]
    if sorted(flat) != sorted(sampling_names):
        raise ValueError(
            "block_spec must partition the non-omega parameters; "
            f"expected {sorted(sampling_names)}, got {sorted(flat)}"
        )


def run_chains(y: TimeSeries, prior: PriorSpec, config: SamplerConfig,
               init: ModelParameters) -> list:
    """Run `config.n_chains` chains with independent, reproducible streams."""
    seeds = np.random.SeedSequence(config.rng_seed).spawn(config.n_chains)
    outputs = []
    for i in range(config.n_chains):
        rng = np.random.default_rng(seeds[i])
        outputs.append(run_chain(y, prior, config, init, rng=rng))
    return outputs


def best_chain(chains) -> ChainOutput:
    """Chain with the highest mean kept log posterior.

    The posterior is multimodal, so multi-start chains can settle in
    different basins; summarizing the dominant-mode chain is the
    recommended practice when the sampler has no mode-jumping moves.
    """
    means = [float(np.mean(c.log_posterior_trace)) for c in chains]
    return chains[int(np.argmax(means))]


def pool_chains(chains, max_logpost_gap: float = None) -> ChainOutput:
    """Concatenate kept draws across chains, optionally dropping stuck ones.

    With a gap, chains whose mean kept log posterior trails the best chain
    by more than `max_logpost_gap` nats are excluded: a frozen or
    minor-mode stream sits far below the dominant mass, while healthy
    streams exploring the same posterior differ by O(1) nats. Pooling the
    healthy streams restores the full posterior width that any single
    under-mixed stream tends to understate.
    """
    if max_logpost_gap is not None:
        means = np.array([float(np.mean(c.log_posterior_trace)) for c in chains])
        keep = means >= means.max() - max_logpost_gap
        chains = [c for c, ok in zip(chains, keep) if ok]
    first = chains[0]
    return ChainOutput(
        param_names=first.param_names,
        draws=np.concatenate([c.draws for c in chains]),
        draws_sampling=np.concatenate([c.draws_sampling for c in chains]),
        log_posterior_trace=np.concatenate([c.log_posterior_trace for c in chains]),
        acceptance_rates=first.acceptance_rates,
        diagnostics={},
        rng_seed=first.rng_seed,
        k=first.k, p=first.p, r=first.r,
    )


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def effective_sample_size(x: np.ndarray) -> float:
    """ESS from the autocorrelation sum, truncated at the first negative
    Geyer pair (initial positive sequence)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var <= 0:
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:n].real
    acf /= acf[0]
    tau = 1.0
    m = 1
    while m + 1 < n:
        pair = acf[m] + acf[m + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
        m += 2
    return float(min(n, n / max(tau, 1.0)))


def split_rhat(sequences) -> float:
    """Split-chain potential scale reduction factor.

    Each input sequence is halved; the classic Gelman-Rubin statistic is
    computed across all halves.
    """
    halves = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=float)
        half = seq.size // 2
        if half < 2:
            return math.nan
        halves.append(seq[:half])
        halves.append(seq[half:2 * half])
    m = len(halves)
    length = min(h.size for h in halves)
    chains = np.stack([h[:length] for h in halves])
    w = chains.var(axis=1, ddof=1).mean()
    means = chains.mean(axis=1)
    b = length * means.var(ddof=1)
    if w <= 0:
        return 1.0
    v = (length - 1) / length * w + (m + 1) / (m * length) * b
    return float(math.sqrt(v / w))


# ---------------------------------------------------------------------------
# Export formats
# ---------------------------------------------------------------------------


def chain_to_csv(chain: ChainOutput, path):
    """One row per kept draw: iteration, canonical parameters, log posterior."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration," + ",".join(chain.param_names) + ",log_posterior\r\n")
        for i in range(chain.draws.shape[0]):
            cells = [str(i)] + [repr(float(v)) for v in chain.draws[i]]
            cells.append(repr(float(chain.log_posterior_trace[i])))
            fh.write(",".join(cells) + "\r\n")


def chain_to_npz(chain: ChainOutput, path, config_hash: str = ""):
    """Compact binary chain artifact (numpy archive).

    Includes the final sampler state (parameter point, proposal scales and
    covariances, RNG state) so a run can be resumed from the archive.
    """
    np.savez_compressed(
        path,
        param_names=np.array(chain.param_names),
        draws=chain.draws,
        draws_sampling=chain.draws_sampling,
        log_posterior_trace=chain.log_posterior_trace,
        acceptance_json=json.dumps(chain.acceptance_rates),
        diagnostics_json=json.dumps(chain.diagnostics),
        final_state_json=json.dumps(chain.final_state),
        rng_seed=chain.rng_seed,
        dims=np.array([chain.k, chain.p, chain.r]),
        config_hash=config_hash,
    )


def chain_from_npz(path) -> ChainOutput:
    data = np.load(path, allow_pickle=False)
    k, p, r = (int(v) for v in data["dims"])
    final_state = None
    if "final_state_json" in data.files:
        final_state = json.loads(str(data["final_state_json"]))
    return ChainOutput(
        param_names=[str(s) for s in data["param_names"]],
        draws=data["draws"],
        draws_sampling=data["draws_sampling"],
        log_posterior_trace=data["log_posterior_trace"],
        acceptance_rates=json.loads(str(data["acceptance_json"])),
        diagnostics=json.loads(str(data["diagnostics_json"])),
        rng_seed=int(data["rng_seed"]),
        k=k, p=p, r=r,
        final_state=final_state,
    )


# ---------------------------------------------------------------------------
# Initialization heuristics
# ---------------------------------------------------------------------------


def initial_parameters(y: TimeSeries, prior: PriorSpec, k: int, p: int, r: int,
                       alpha_init: float = 0.1) -> ModelParameters:
    """Data-driven starting point with a finite posterior.

    Frequencies start at the periodogram peaks and are then refined,
    jointly with the phase shifts, by a coarse likelihood grid over each
    frequency's support (the Fourier grid is coarse at short samples, and
    starting off the ridge can drop the chain into a wrong basin). Trend by
    least squares, amplitudes from the peak ordinates, rho = 0, small
    positive loadings, omega from the residual variance.
    """
    from .model import trend_vector
    from .moments import periodogram, pick_peaks

    n = y.n
    pg = periodogram(y, demean=True)
    peaks = np.sort(pick_peaks(pg, k))[::-1]
    lam = np.empty(k)
    for j in range(k):
        lo, hi = prior.lambda_priors[j].support
        width = hi - lo
        lam[j] = min(max(peaks[j], lo + 1e-3 * width), hi - 1e-3 * width)

    # least-squares polynomial trend on (t/n)^i
    t_grid = np.arange(1, n + 1) / n
    basis = np.vander(t_grid, r + 1, increasing=True)
    beta, *_ = np.linalg.lstsq(basis, y.values, rcond=None)
    detrended = y.values - basis @ beta

    # sinusoid amplitudes from the periodogram ordinates at the peaks
    amps = np.empty(k)
    for j in range(k):
        pos = int(np.argmin(np.abs(pg.frequencies - peaks[j])))
        amps[j] = 2.0 * math.sqrt(pg.power[pos] / n)
    scale_floor = 0.05 * (detrended.std() + 1e-12)
    a0 = max(amps[0], scale_floor)
    q0 = amps[1:] / a0

    rough_omega = 1.0 / max(np.var(detrended), 1e-10)
    alpha_mean_A = 0.5 * (prior.alphaA_prior.lo + prior.alphaA_prior.hi)
    alpha_mean_P = 0.5 * (prior.alphaP_prior.lo + prior.alphaP_prior.hi)

    def sse_at(lam_vec, p_vec):
        trial = ModelParameters(
            a=a0, q=q0, lam=np.asarray(lam_vec, float),
            p_shift=np.asarray(p_vec, float), beta=beta,
            phi=np.zeros(p), alpha_A=alpha_mean_A, alpha_P=alpha_mean_P,
            omega=rough_omega, a_init=np.zeros(p),
        )
        return _sse_and_n(trial, y)[0], trial

    # greedy joint (frequency, phase) grid per component: minimizing the
    # residual sum of squares is equivalent to maximizing the likelihood here
    p_shift = np.array([0.5 * (lo + hi) for lo, hi in prior.p_supports()])
    for j in range(k):
        lam_lo, lam_hi = prior.lambda_priors[j].support
        lam_pad = 1e-3 * (lam_hi - lam_lo)
        p_lo, p_hi = prior.p_supports()[j]
        p_pad = 1e-3 * (p_hi - p_lo)
        best = (math.inf, lam[j], p_shift[j])
        for lam_g in np.linspace(lam_lo + lam_pad, lam_hi - lam_pad, 41):
            lam_trial = lam.copy()
            lam_trial[j] = lam_g
            for p_g in np.linspace(p_lo + p_pad, p_hi - p_pad, 64):
                p_trial = p_shift.copy()
                p_trial[j] = p_g
                sse, _ = sse_at(lam_trial, p_trial)
                if sse < best[0]:
                    best = (sse, lam_g, p_g)
        lam[j], p_shift[j] = best[1], best[2]

    _, params = sse_at(lam, p_shift)
    params.alpha_A = alpha_init
    params.alpha_P = alpha_init
    sse, _ = _sse_and_n(params, y)
    params.omega = float(n / max(sse, 1e-10))
    return params
