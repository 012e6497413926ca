"""Solver and statistics toolkit for high-order uncertain differential
equations: quantile paths, residuals, parameter estimation, goodness-of-fit
tests, and a complete nuclear-reactor case study."""

from .expr import (
    ArityError,
    DomainError,
    EvalError,
    ExprError,
    ExprSyntaxError,
    UndeclaredIdentifierError,
    compile_expr,
    eval_expr,
    parse_expr,
    to_source,
)
from .model import (
    ConditionDomain,
    ConditionReport,
    HudeModel,
    InitialState,
    ModelFormatError,
    VectorField,
    alpha_path_field,
    check_alpha_path_condition,
    load_model,
    model_from_dict,
    phi_inv,
)
from .odeint import (
    DEFAULT_STEP,
    IntegrationError,
    Trajectory,
    integrate,
    integrate_euler,
    integrate_rk4,
)
from .alphapath import (
    AlphaPath,
    AlphaPathConditionWarning,
    ComparisonReport,
    InverseDistributionCurve,
    compare_paths,
    inverse_distribution,
    solve_alpha_path,
)
from .residuals import (
    DataFormatError,
    ObservationSeries,
    ResidualSaturationWarning,
    ResidualVector,
    compute_residual,
    compute_residuals,
    estimate_derivatives,
    read_observations,
    simulate_observations,
)
from .estimate import (
    EstimationError,
    EstimationResult,
    estimate_mle,
    estimate_moments,
    minimize_in_box,
    mle_objective,
    moment_objective,
)
from .hypotest import KsResult, TestReport, two_sample_ks, uncertain_hypothesis_test
from .reactor import (
    CASE_STUDY_INIT,
    FITTED_THETA,
    THERMAL_U235,
    ReactorParams,
    build_point_kinetics,
    build_reactor_hude,
    closed_form_psi_inv,
    simplified_alpha_coefficients,
    simplified_alpha_field,
    table3,
    table4,
)
from .estimator import HudeEstimator
from .validation import NotFittedError

__version__ = "0.1.0"
