"""Joint modeling of continuous endpoints, treatment discontinuation, and
retrieved dropouts, with treatment-policy and hypothetical effect estimation,
competing multiple-imputation methods, and a simulation engine.
"""

from .data import (
    EndpointSpec,
    SubjectClass,
    SubjectRecord,
    TrialDataset,
    classify,
    compute_endpoint,
    invert_endpoint,
    load_dataset,
    save_dataset,
)
from .errors import (
    ConvergenceError,
    DatasetError,
    EstimabilityError,
    InsufficientDonorsError,
    RdtrialsError,
    SeparationError,
)
from .imputation import ImputationMethod, PooledEstimate, impute_once, mi_analyze, rubin_pool
from .joint import (
    BootstrapResult,
    EffectEstimate,
    FitOptions,
    JointModelFit,
    bootstrap_tp,
    fit_joint,
    fit_probit,
    hypothetical_effect,
    loglik_components,
    observed_loglik,
    tp_effect_closed_form,
    tp_effect_plugin,
    tp_effect_with_bootstrap,
)
from .numerics import (
    LeastSquaresResult,
    RngStream,
    least_squares_fit,
    norm_cdf,
    norm_quantile,
)
from .simulation import (
    InferenceSettings,
    MethodMetrics,
    ScenarioConfig,
    SimulationReport,
    generate_trial,
    run_study,
    true_tp_effect,
)

__version__ = "0.1.0"
