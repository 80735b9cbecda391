"""Mutation-selection equilibria on [0,1].

A numerical library for the house-of-cards mutation-selection dynamics:
exact iteration of fitness distributions in a closed mixture basis,
overflow-free ratio recursions with certified limit brackets, closed-form
equilibria and condensation thresholds for the constant-probability model,
and Monte Carlo estimation and model comparisons when the mutation
probabilities are random.
"""

from .measures import (
    AtomicMeasure,
    IncompatibleMeasureError,
    MixtureMeasure,
    MomentSequence,
    NormalizedMoments,
    UnsupportedFamilyError,
    parse_q_spec,
    tv_distance_atomic,
)
from .iteration import (
    DegenerateMeasureError,
    MutationPath,
    atomic_iterate,
    backward_sequence,
    coefficient_expansion,
    forward_step,
    forward_step_atomic,
    terminal_gap,
)
from .ratios import (
    ConvergenceFailure,
    HessenbergMatrix,
    InfiniteOddsError,
    OracleSizeError,
    RatioLimits,
    RatioState,
    StepTooLargeError,
    batched_backward,
    cumulative_log_growth,
    derivative_checks,
    det_by_elimination,
    det_by_path_expansion,
    det_paths_through,
    growth_factor_bounds,
    moment_matrix,
    ratio_limits,
    ratio_table,
)
from .equilibrium import (
    CurvatureScan,
    KingmanEquilibrium,
    NumericFailure,
    WrongBranchError,
    curvature_expression,
    equilibrium_growth_factor,
    equilibrium_growth_factor_many,
    interior_curve_uniform,
    kingman_equilibrium,
    solve_theta,
    solve_theta_many,
    theta_curvature_scan,
    threshold_integral,
)
from .random_models import (
    BoundedLaw,
    ComparisonReport,
    CondensateEstimate,
    CondensationVerdict,
    CriterionEstimate,
    EquilibriumSample,
    ExchangeableReport,
    MutationLaw,
    QuadraticForm,
    compare_models,
    condensate_via_moment_tail,
    condensation_verdict,
    draw_paths,
    estimate_log_growth_iid,
    estimate_log_growth_iid_rate,
    estimate_log_growth_shared,
    exchangeable_inequality_check,
    sample_equilibrium_iid,
)

__version__ = "0.1.0"
