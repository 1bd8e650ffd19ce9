"""Cox proportional hazards with a Pareto tail beyond an adaptive threshold."""

from .aggregation import (
    AggregateModel,
    aggregate_adaptive,
    aggregate_quantile,
    aggregate_simple,
    aggregate_survival,
)
from .cox import CoxFit, StepFunction, breslow_baseline, fit_beta, fit_cox, survival_at
from .data import SurvivalSample, diagnostics, dump_dataset, load_dataset
from .errors import (
    ConvergenceError,
    CoxTailError,
    DataError,
    SelectionError,
    SingularInformationError,
)
from .tail import (
    SemiParamModel,
    TailFit,
    fit_semiparametric,
    hill_theta,
    kl_pareto,
    semiparam_cum_hazard,
    semiparam_quantile,
    semiparam_survival,
)
from .threshold import SelectionParams, ThresholdSelection, calibrate_D, select_threshold

__version__ = "0.1.0"
