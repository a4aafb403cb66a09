"""Dynamic-effect restricted mean time lost (RMTL) regression for
competing-risks survival data.

The restricted mean time lost to a cause is the area under that cause's
cumulative incidence curve up to a horizon l. This package regresses it
on covariates simultaneously across a whole grid of horizons: the data
are stacked once per horizon with inverse-probability-of-censoring
weights, and each covariate's effect is a quadratic polynomial in l, so
a single fit yields the full effect trajectory beta_k(l) together with
cluster-robust standard errors.
"""

from .data import (
    CompetingRisksDataset,
    CovariateSchema,
    DataError,
    SchemaEntry,
    SchemaError,
    SubjectRecord,
    load_dataset,
    load_schema,
    write_dataset,
)
from .estimator import (
    ConvergenceError,
    ConvergenceReport,
    EstimationError,
    FittedModel,
    LinkSpec,
    RankDeficiencyError,
    WaldRow,
    backward_stepwise,
    fit,
    fit_static,
    get_link,
    identity_link,
    log_link,
    sandwich_variance,
    wald_table,
)
from .evaluation import (
    EffectEstimate,
    EffectTrajectory,
    PredictionRangeError,
    RmtlPrediction,
    c_index,
    effect_trajectory,
    evaluate_effect,
    predict_rmtl,
    prediction_error,
    real_time_effect,
)
from .nonparam import StepFunction, aalen_johansen_cif, all_cause_km, censoring_km, rmtl_group
from .simulation import (
    MetricsTable,
    SimulationError,
    SimulationScenario,
    calibrate_censoring,
    cif1,
    cif2,
    generate_cohort,
    load_scenario,
    p_event1,
    reference_scenario,
    run_monte_carlo,
    sample_event,
    shr,
    true_coefficients,
    true_rmtl,
)
from .stacking import (
    HorizonGrid,
    StackedDataset,
    TimeBasis,
    build_stacked,
    build_time_grid,
    expand_design,
    restrict,
    write_stacked_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CompetingRisksDataset",
    "ConvergenceError",
    "ConvergenceReport",
    "CovariateSchema",
    "DataError",
    "EffectEstimate",
    "EffectTrajectory",
    "EstimationError",
    "FittedModel",
    "HorizonGrid",
    "LinkSpec",
    "MetricsTable",
    "PredictionRangeError",
    "RankDeficiencyError",
    "RmtlPrediction",
    "SchemaEntry",
    "SchemaError",
    "SimulationError",
    "SimulationScenario",
    "StackedDataset",
    "StepFunction",
    "SubjectRecord",
    "TimeBasis",
    "WaldRow",
    "aalen_johansen_cif",
    "all_cause_km",
    "backward_stepwise",
    "build_stacked",
    "build_time_grid",
    "c_index",
    "calibrate_censoring",
    "censoring_km",
    "cif1",
    "cif2",
    "effect_trajectory",
    "evaluate_effect",
    "expand_design",
    "fit",
    "fit_static",
    "generate_cohort",
    "get_link",
    "identity_link",
    "load_dataset",
    "load_scenario",
    "load_schema",
    "log_link",
    "p_event1",
    "predict_rmtl",
    "prediction_error",
    "real_time_effect",
    "reference_scenario",
    "restrict",
    "rmtl_group",
    "run_monte_carlo",
    "sample_event",
    "sandwich_variance",
    "shr",
    "true_coefficients",
    "true_rmtl",
    "wald_table",
    "write_dataset",
    "write_stacked_csv",
]
