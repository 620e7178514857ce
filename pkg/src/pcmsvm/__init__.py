"""Semi-parametric promotion-time cure model with an SVM incidence
component (PCM-SVM) and a logistic-incidence comparator (PCM-Logit).

The incidence part (probability of not being cured) is learned by a
support vector machine with Platt-scaled probability outputs; the latency
part follows a proportional-hazards structure with a Breslow-type
baseline. Estimation runs an EM algorithm with multiple imputation of the
latent cure labels.
"""

from .cox import (
    BaselineSurvival,
    LatencyModel,
    breslow_baseline,
    build_risk_index,
    fit_beta,
    partial_loglik,
    promotion_cdf,
)
from .em import (
    BootstrapResult,
    EmConfig,
    IncidenceModel,
    LogitParams,
    PcmFit,
    SurvivalRecord,
    bootstrap_se,
    e_step_counts,
    em_fit,
    logit_em_fit,
    predict,
    predict_quantities,
    uncured_weight,
)
from .exceptions import (
    BootstrapFailureError,
    DegenerateLabelsError,
    EmptyEventsError,
    InputError,
    NonConvergenceError,
    NumericalError,
    PcmError,
)
from .metrics import (
    RocCurve,
    bias_mse,
    classification_accuracy,
    imputed_roc,
    roc_auc,
)
from .simulate import SimConfig, SimDataset, gen_dataset, true_pi
from .study import StudyConfig, StudyResult, run_study
from .svm import KernelSpec, PlattCalibration, SvmModel, platt_prob, smo_train, tune_hyperparams

__version__ = "1.0.0"

__all__ = [
    "BaselineSurvival",
    "BootstrapFailureError",
    "BootstrapResult",
    "DegenerateLabelsError",
    "EmConfig",
    "EmptyEventsError",
    "IncidenceModel",
    "InputError",
    "KernelSpec",
    "LatencyModel",
    "LogitParams",
    "NonConvergenceError",
    "NumericalError",
    "PcmError",
    "PcmFit",
    "PlattCalibration",
    "RocCurve",
    "SimConfig",
    "SimDataset",
    "StudyConfig",
    "StudyResult",
    "SurvivalRecord",
    "SvmModel",
    "bias_mse",
    "bootstrap_se",
    "breslow_baseline",
    "build_risk_index",
    "classification_accuracy",
    "e_step_counts",
    "em_fit",
    "fit_beta",
    "gen_dataset",
    "imputed_roc",
    "logit_em_fit",
    "partial_loglik",
    "platt_prob",
    "predict",
    "predict_quantities",
    "promotion_cdf",
    "roc_auc",
    "run_study",
    "smo_train",
    "true_pi",
    "tune_hyperparams",
    "uncured_weight",
]
