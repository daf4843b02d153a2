import math

import numpy as np
import pytest
from scipy import stats

from stochcycle.analysis import (
    CycleDecomposition,
    clock,
    decompose,
    derived_summary,
    forecast,
    highest_density_interval,
    quantile_ellipsoid,
    summarize,
)
from stochcycle.mcmc import (
    ChainOutput,
    SamplerConfig,
    initial_parameters,
    run_chain,
    single_block,
)
from stochcycle.model import TimeSeries, param_names, params_to_vector, simulate
from stochcycle.moments import cycle_length_years, theoretical_variance
from stochcycle.priors import default_prior_spec

from conftest import make_params


def single_draw_chain(params) -> ChainOutput:
    vec = params_to_vector(params)
    names = param_names(params.k, params.p, params.r)
    return ChainOutput(
        param_names=names,
        draws=vec[None, :],
        draws_sampling=np.zeros((1, len(names))),
        log_posterior_trace=np.zeros(1),
        acceptance_rates={},
        diagnostics={},
        rng_seed=0,
        k=params.k, p=params.p, r=params.r,
    )


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------


def test_summarize_standard_normal():
    rng = np.random.default_rng(1)
    draws = rng.normal(size=1_000_000)
    s = summarize(draws, 0.95)
    assert s.mean == pytest.approx(0.0, abs=0.01)
    assert s.std_dev == pytest.approx(1.0, abs=0.01)
    assert s.quantile_ci[0] == pytest.approx(-1.96, abs=0.02)
    assert s.quantile_ci[1] == pytest.approx(1.96, abs=0.02)
    assert s.hpd[0] == pytest.approx(-1.96, abs=0.02)
    assert s.hpd[1] == pytest.approx(1.96, abs=0.02)
    assert len(s.modes) == 1 and abs(s.modes[0]) < 0.05
    # unimodal: the shortest interval is no wider than the equal-tail one
    assert (s.hpd[1] - s.hpd[0]) <= (s.quantile_ci[1] - s.quantile_ci[0]) + 0.01


def test_summarize_constant_sample():
    s = summarize(np.full(500, 2.5))
    assert s.mean == s.median == 2.5
    assert s.modes == [2.5]
    assert s.std_dev == 0.0
    assert s.quantile_ci == (2.5, 2.5)
    assert s.hpd == (2.5, 2.5)


def test_summarize_bimodal_modes():
    rng = np.random.default_rng(7)
    draws = np.concatenate([
        rng.normal(-1.0, 0.1, size=5000),
        rng.normal(1.0, 0.1, size=5000),
    ])
    s = summarize(draws)
    assert len(s.modes) == 2
    found = sorted(s.modes)
    assert found[0] == pytest.approx(-1.0, abs=0.1)
    assert found[1] == pytest.approx(1.0, abs=0.1)


def test_summarize_needs_enough_draws():
    with pytest.raises(ValueError):
        summarize(np.ones(99))


def test_hpd_subset_of_draw_range():
    rng = np.random.default_rng(3)
    draws = rng.gamma(2.0, 1.0, size=20_000)
    lo, hi = highest_density_interval(draws, 0.9)
    assert draws.min() <= lo < hi <= draws.max()
    inside = np.mean((draws >= lo) & (draws <= hi))
    assert inside == pytest.approx(0.9, abs=0.01)


def test_derived_summary_identity_map_matches():
    rng = np.random.default_rng(4)
    draws = rng.normal(2.0, 0.3, size=5000)
    direct = summarize(draws)
    derived = derived_summary(draws, lambda v: v)
    assert derived.mean == pytest.approx(direct.mean)
    assert derived.hpd == direct.hpd
    assert derived.quantile_ci == direct.quantile_ci


def test_derived_summary_point_mass_cycle_length():
    draws = np.full(200, 0.42616)
    s = derived_summary(draws, lambda lam: cycle_length_years(lam, 4))
    assert s.mean == pytest.approx(3.686, abs=1e-3)
    assert s.quantile_ci[0] == pytest.approx(s.mean, rel=1e-12)
    assert s.quantile_ci[1] == pytest.approx(s.mean, rel=1e-12)
    assert s.std_dev == pytest.approx(0.0, abs=1e-12)
    assert len(s.modes) == 1 and s.modes[0] == pytest.approx(3.686, abs=1e-3)


def test_derived_summary_monotone_map_flips_interval():
    rng = np.random.default_rng(5)
    draws = rng.uniform(1.0, 2.0, size=4000)
    direct = summarize(draws)
    flipped = derived_summary(draws, lambda v: -v)
    assert flipped.quantile_ci[0] == pytest.approx(-direct.quantile_ci[1], rel=1e-12)
    assert flipped.quantile_ci[1] == pytest.approx(-direct.quantile_ci[0], rel=1e-12)


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------


def test_decompose_deterministic_single_draw():
    params = make_params(q=np.array([0.6]), lam=np.array([0.9, 0.3]),
                         p_shift=np.array([0.4, 1.2]), alpha_A=0.0, alpha_P=0.0,
                         beta=np.array([1.5]))
    y, _ = simulate(params, 50, rng=2)
    decomp = decompose(single_draw_chain(params), y)
    t = np.arange(1, 51, dtype=float)
    want0 = params.a * np.sin(0.9 * (t + 0.4))
    want1 = params.a * 0.6 * np.sin(0.3 * (t + 1.2))
    np.testing.assert_allclose(decomp.components[0, 0], want0, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(decomp.components[0, 1], want1, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(decomp.amplitude[0], params.a)
    np.testing.assert_allclose(decomp.phase[0], 0.0)


def test_decompose_residual_identity_on_fitted_chain():
    params = make_params(a=2.0, lam=np.array([0.9]), p_shift=np.array([0.4]),
                         alpha_A=0.3, alpha_P=0.3, omega=4.0)
    y, _ = simulate(params, 80, rng=10)
    spec = default_prior_spec(1, 1, 0, [(0.6, 1.2)])
    config = SamplerConfig(n_iterations=800, n_burnin=400, thin=2, n_chains=1,
                           rng_seed=1, adapt_window=100)
    chain = run_chain(y, spec, config, initial_parameters(y, spec, 1, 1, 0))
    decomp = decompose(chain, y)
    rebuilt = decomp.components.sum(axis=1) + decomp.mu + decomp.eps
    scale = np.abs(y.values).max()
    np.testing.assert_allclose(rebuilt, np.tile(y.values, (decomp.n_draws, 1)),
                               rtol=1e-10, atol=1e-10 * scale)
    assert np.all(decomp.component_lower <= decomp.component_median + 1e-15)
    assert np.all(decomp.component_median <= decomp.component_upper + 1e-15)


def test_decompose_recovers_true_components():
    params = make_params(a=2.0, q=np.array([-0.8]), lam=np.array([1.0, 0.25]),
                         p_shift=np.array([0.4, 1.2]), alpha_A=0.25, alpha_P=0.25,
                         omega=4.0, phi=np.array([0.5]))
    y, path = simulate(params, 200, rng=21)
    # true components from the simulation's own latent path
    t = np.arange(1, 201, dtype=float)
    a_prev = np.concatenate(([params.a_init[0]], path.A[:-1]))
    p_prev = np.concatenate(([0.0], path.P[:-1]))
    true_c1 = (params.a + a_prev) * np.sin(1.0 * (t + 0.4 + p_prev))
    spec = default_prior_spec(2, 1, 0, [(0.8, 1.2), (0.15, 0.4)])
    config = SamplerConfig(n_iterations=30_000, n_burnin=15_000, thin=10, n_chains=1,
                           rng_seed=3, adapt_window=2000,
                           block_spec=single_block(2, 1, 0))
    chain = run_chain(y, spec, config, initial_parameters(y, spec, 2, 1, 0))
    decomp = decompose(chain, y)
    corr = np.corrcoef(true_c1, decomp.component_median[0])[0, 1]
    assert corr > 0.8


# ---------------------------------------------------------------------------
# clocks
# ---------------------------------------------------------------------------


def _decomp_from_components(comps, level=0.95):
    m, k, n = comps.shape
    return CycleDecomposition(components=comps, amplitude=np.zeros((m, n)),
                              phase=np.zeros((m, n)), mu=np.zeros((m, n)),
                              eps=np.zeros((m, n)), level=level,
                              draw_indices=np.arange(m))


def test_clock_point_mass_single_quadrant():
    comps = np.array([[[0.0, 1.0, 2.0]]])  # one draw, one frequency
    cs = clock(_decomp_from_components(comps), 0)
    np.testing.assert_array_equal(cs.time_index, [2, 3])
    # both steps have (delta, level) = (1, positive) -> expansion
    np.testing.assert_array_equal(cs.quadrant_probs[0], [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(cs.quadrant_probs[1], [1.0, 0.0, 0.0, 0.0])
    assert np.all(cs.tie_mass == 0.0)


def test_clock_symmetric_draws_quarter_each():
    # build components so that (delta, level) at t=2 are independent
    # symmetric variables: level c, previous value c - d
    rng = np.random.default_rng(11)
    m = 40_000
    d = rng.normal(size=m)
    c = rng.normal(size=m)
    comps = np.stack([c - d, c], axis=1)[:, None, :]
    cs = clock(_decomp_from_components(comps), 0)
    np.testing.assert_allclose(cs.quadrant_probs[0], 0.25, atol=0.02)
    assert cs.quadrant_probs[0].sum() + cs.tie_mass[0] == pytest.approx(1.0)


def test_clock_probabilities_sum_to_one_without_ties():
    rng = np.random.default_rng(12)
    comps = rng.normal(size=(500, 2, 10))
    cs = clock(_decomp_from_components(comps), 1)
    np.testing.assert_allclose(cs.quadrant_probs.sum(axis=1), 1.0, atol=1e-12)
    assert cs.ellipses[0.9][0] is not None


def test_clock_medians_match_definition():
    rng = np.random.default_rng(13)
    comps = rng.normal(size=(801, 1, 5))
    cs = clock(_decomp_from_components(comps), 0)
    delta = comps[:, 0, 1:] - comps[:, 0, :-1]
    np.testing.assert_allclose(cs.clock_x, np.median(delta, axis=0))
    np.testing.assert_allclose(cs.clock_y, np.median(comps[:, 0, 1:], axis=0))


# ---------------------------------------------------------------------------
# quantile ellipsoids
# ---------------------------------------------------------------------------


def test_ellipsoid_radius_matches_chi2_for_gaussian():
    rng = np.random.default_rng(14)
    pts = rng.normal(size=(100_000, 2))
    ell = quantile_ellipsoid(pts, 0.9)
    want = math.sqrt(stats.chi2(2).ppf(0.9))  # sqrt(4.605)
    assert ell.radius**2 == pytest.approx(4.605, rel=0.03)
    assert ell.radius == pytest.approx(want, rel=0.02)


def test_ellipsoid_coverage_matches_level():
    rng = np.random.default_rng(15)
    pts = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.7], [0.7, 1.0]],
                                  size=100_000)
    for level in (0.3, 0.6, 0.9):
        ell = quantile_ellipsoid(pts, level)
        inside = ell.contains(pts).mean()
        assert inside == pytest.approx(level, abs=1.0 / math.sqrt(pts.shape[0]) + 1e-4)


def test_ellipsoid_affine_equivariance():
    rng = np.random.default_rng(16)
    pts = rng.normal(size=(5000, 2))
    A = np.array([[2.0, 0.5], [-1.0, 1.5]])
    b = np.array([3.0, -1.0])
    ell = quantile_ellipsoid(pts, 0.7)
    ell_t = quantile_ellipsoid(pts @ A.T + b, 0.7)
    np.testing.assert_allclose(ell_t.center, A @ ell.center + b, atol=1e-10)
    np.testing.assert_allclose(ell_t.shape, A @ ell.shape @ A.T, rtol=1e-8)
    assert ell_t.radius == pytest.approx(ell.radius, rel=1e-10)
    np.testing.assert_array_equal(ell.contains(pts), ell_t.contains(pts @ A.T + b))


def test_ellipsoid_rejects_degenerate_input():
    rng = np.random.default_rng(17)
    with pytest.raises(ValueError):
        quantile_ellipsoid(rng.normal(size=(50, 2)), 0.9)
    line = np.column_stack([np.arange(200.0), 2.0 * np.arange(200.0)])
    with pytest.raises(ValueError):
        quantile_ellipsoid(line, 0.9)


# ---------------------------------------------------------------------------
# forecasting
# ---------------------------------------------------------------------------


def test_forecast_deterministic_limit_matches_closed_form():
    params = make_params(q=np.array([0.7]), lam=np.array([0.9, 0.3]),
                         p_shift=np.array([0.4, 1.2]), alpha_A=0.0, alpha_P=0.0,
                         beta=np.array([1.0, 0.5]))
    n, h = 60, 16
    y, _ = simulate(params, n, rng=3)
    fc = forecast(single_draw_chain(params), y, horizon=h, paths_per_draw=3, rng=1)
    t = np.arange(n + 1, n + h + 1, dtype=float)
    want = params.a * (np.sin(0.9 * (t + 0.4)) + 0.7 * np.sin(0.3 * (t + 1.2))) \
        + 1.0 + 0.5 * t / n
    np.testing.assert_allclose(fc.point[0], want, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(fc.point_median, want, rtol=1e-10, atol=1e-12)


def test_forecast_long_horizon_variance_approaches_stationary():
    params = make_params(a=1.5, lam=np.array([1.2]), p_shift=np.array([0.3]),
                         alpha_A=0.4, alpha_P=0.6, omega=1.0, phi=np.array([0.5]))
    y, _ = simulate(params, 100, rng=4)
    fc = forecast(single_draw_chain(params), y, horizon=60, paths_per_draw=20_000,
                  rng=5)
    assert fc.variance[-1] == pytest.approx(theoretical_variance(params), rel=0.05)


def test_forecast_mean_envelope_decays_at_phase_noise_rate():
    # predictive mean is pseudo-cyclical with exponential damping; the
    # log-envelope slope must track alpha_P^2 lambda^2 sigma^2 / 2
    params = make_params(a=2.0, lam=np.array([1.0]), p_shift=np.array([0.2]),
                         alpha_A=0.3, alpha_P=0.5, omega=1.0, phi=np.array([0.5]),
                         beta=np.array([0.0]))
    rate = 0.5 * 0.5**2 * 1.0**2 * 1.0
    y, _ = simulate(params, 80, rng=6)
    h = 30
    fc = forecast(single_draw_chain(params), y, horizon=h, paths_per_draw=150_000,
                  rng=7)
    m = np.abs(fc.mean)
    # envelope via the per-period maxima of |mean|
    period = int(round(2 * math.pi / 1.0))
    centers, peaks = [], []
    for start in range(0, h - period + 1, period):
        w = slice(start, start + period)
        idx = start + int(np.argmax(m[w]))
        centers.append(idx + 1)
        peaks.append(m[idx])
    slope = np.polyfit(centers, np.log(peaks), 1)[0]
    assert slope == pytest.approx(-rate, rel=0.2)


def test_forecast_validates_horizon():
    params = make_params()
    y, _ = simulate(params, 30, rng=8)
    with pytest.raises(ValueError):
        forecast(single_draw_chain(params), y, horizon=0)
