"""Scaling-law simulation for one-pass SGD on Gaussian-sketched regression.

The package simulates the exact model (a linear predictor on M-dimensional
Gaussian-sketched covariates trained by one-pass SGD), evaluates the
closed-form risk decomposition, checks the spectral concentration of the
sketched covariance, and fits empirical scaling-law exponents against the
theoretical predictions.
"""

__version__ = "0.1.0"

from .spectrum import (  # noqa: F401
    PriorSpec,
    Spectrum,
    explicit_spectrum,
    load_explicit_csv,
    make_log_power_law,
    make_power_law,
    sample_prior,
)
from .sketch import (  # noqa: F401
    ConcentrationReport,
    SingularModelError,
    SketchMatrix,
    SketchedModel,
    build_model,
    concentration_report,
    log_regime_boundary,
    model_summary,
    sample_sketch,
    tail_ratio,
    write_concentration_csv,
)
from .sgd import (  # noqa: F401
    SGDOutcome,
    StepsizeSchedule,
    constant_schedule,
    geometric_schedule,
    run_average_iterate,
    run_direct,
    run_from_innovations,
    run_last_iterate,
    trial_seed,
)
from .risk import (  # noqa: F401
    GeneralBoundTerms,
    RiskReport,
    bias_closed_form,
    decompose,
    effective_sample_size,
    general_bound_terms,
    population_risk,
    population_risk_direct,
    variance_closed_form,
)
from .theory import (  # noqa: F401
    NonMatchingRegimeError,
    RatePrediction,
    StepsizeRule,
    compute_optimal_allocation,
    optimal_stepsize,
    predicted_rates,
)
from .fit import (  # noqa: F401
    FitConvergenceError,
    FitResult,
    chinchilla_fit,
    loglog_slope,
)
from .harness import (  # noqa: F401
    AggregateCell,
    ConfigError,
    ExperimentConfig,
    ExperimentRecord,
    aggregate,
    emit_outputs,
    fit_aggregates,
    read_records_csv,
    run_grid,
)
