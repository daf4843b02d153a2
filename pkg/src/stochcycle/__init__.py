"""Multi-frequency nonlinear stochastic cycle modelling toolkit.

Library layout:

- `model`: parameter space, exact likelihood recursion, simulation.
- `moments`: closed-form moment structure and periodogram utilities.
- `priors`: prior specification and the partial-autocorrelation transform.
- `mcmc`: Gibbs-within-Metropolis posterior sampler.
- `analysis`: posterior summaries, cycle decomposition, clocks, forecasting.
- `cli`: command-line pipeline (simulate / periodogram / fit / summarize /
  decompose / clock / forecast).
"""

from .analysis import (
    ClockSeries,
    CycleDecomposition,
    Ellipse,
    Forecast,
    ParameterSummary,
    clock,
    decompose,
    derived_summary,
    forecast,
    quantile_ellipsoid,
    summarize,
)
from .mcmc import (
    ChainOutput,
    SamplerConfig,
    default_blocks,
    effective_sample_size,
    gibbs_omega,
    initial_parameters,
    run_chain,
    run_chains,
    split_rhat,
)
from .model import (
    LatentPath,
    ModelParameters,
    TimeSeries,
    ValidityReport,
    conditional_mean,
    filter_path,
    log_likelihood,
    param_names,
    params_from_record,
    params_to_record,
    simulate,
    trend,
    validate,
)
from .moments import (
    Periodogram,
    almost_periodic_mean,
    ar_autocovariance,
    companion,
    cycle_length_years,
    periodogram,
    pick_peaks,
    theoretical_acvf,
    theoretical_variance,
)
from .priors import (
    BetaInterval,
    GammaPrior,
    NormalPrior,
    PriorSpec,
    ar_to_pacf,
    beta_on_interval_logpdf,
    default_prior_spec,
    frequency_supports_from_peaks,
    log_prior,
    pacf_to_ar,
)

__version__ = "0.1.0"

__all__ = [
    "BetaInterval",
    "ChainOutput",
    "ClockSeries",
    "CycleDecomposition",
    "Ellipse",
    "Forecast",
    "GammaPrior",
    "LatentPath",
    "ModelParameters",
    "NormalPrior",
    "ParameterSummary",
    "Periodogram",
    "PriorSpec",
    "SamplerConfig",
    "TimeSeries",
    "ValidityReport",
    "almost_periodic_mean",
    "ar_autocovariance",
    "ar_to_pacf",
    "beta_on_interval_logpdf",
    "clock",
    "companion",
    "conditional_mean",
    "cycle_length_years",
    "decompose",
    "default_blocks",
    "default_prior_spec",
    "derived_summary",
    "effective_sample_size",
    "filter_path",
    "forecast",
    "frequency_supports_from_peaks",
    "gibbs_omega",
    "initial_parameters",
    "log_likelihood",
    "log_prior",
    "pacf_to_ar",
    "param_names",
    "params_from_record",
    "params_to_record",
    "periodogram",
    "pick_peaks",
    "quantile_ellipsoid",
    "run_chain",
    "run_chains",
    "simulate",
    "split_rhat",
    "summarize",
    "theoretical_acvf",
    "theoretical_variance",
    "trend",
    "validate",
    "__version__",
]
