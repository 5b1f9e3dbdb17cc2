"""idlab: a closed-loop identification laboratory.

Simulators for linear closed loops and controlled Markov chains,
maximum-likelihood estimators over compact parameter boxes, and the
diagnostics needed to verify their convergence and consistency behaviour
empirically: forgetting rates, long-run objectives, uniform-convergence
gaps, exact KL bias, persistent excitation, and stability probes.
"""

from .core import (
    ObsSpace,
    ParameterVector,
    RngStream,
    Trajectory,
    ValidationIssue,
    ValidationReport,
    make_rng,
    trajectory_from_csv,
    trajectory_to_csv,
    validate_trajectory,
)
from .linsys import (
    LinearClosedLoopSystem,
    RationalFilter,
    ShiftPolynomial,
    UnstableSystemError,
    burn_in_length,
    closed_loop_stability_radius,
    respond_to_noise,
    simulate_linear_closed_loop,
    stability_radius,
)
from .markov import (
    ControlledMarkovChain,
    NonErgodicChainError,
    RegressorDistribution,
    SupportCheckResult,
    phi_index,
    simulate_cmc,
    stationary_distribution,
    support_check,
)
from .models import (
    ArmaxStructure,
    ArxStructure,
    GaussianPredictorModel,
    LogLikelihoodSeries,
    NonMinimumPhaseError,
    TabularMarkovModel,
    avg_loglik,
    loglik_at,
    loglik_series,
    loglik_truncated_at,
    predictor_errors,
)
from .estimation import (
    FitResult,
    GradientOptions,
    NotPersistentlyExcitingError,
    arx_gradient,
    finite_difference_gradient,
    fit_arx_least_squares,
    fit_projected_gradient,
    fit_tabular,
    grid_maximize,
)
from .diagnostics import (
    AsymptoticEstimate,
    DecayFit,
    DecayScenario,
    DriftReport,
    ForgettingReport,
    GapReport,
    KlArgminResult,
    PersistentExcitationResult,
    RegressorMoment,
    RMeanProbeReport,
    argmin_kl_oracle,
    dominance_probe,
    estimate_asymptotic_objective,
    estimate_forgetting_decay,
    exact_kl_bias,
    lipschitz_probe,
    persistent_excitation_check,
    r_mean_stability_probe,
    stationarity_drift_check,
    uniform_convergence_gap,
)

__version__ = "0.1.0"
