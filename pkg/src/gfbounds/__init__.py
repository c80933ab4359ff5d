"""gfbounds: moment-matched Gaussian filtering with certified Wasserstein
error bounds.

The library parses model functions from a small expression language,
differentiates them with forward-mode jets, runs the one-step Gaussian
(moment-matched) filter, and assembles computable upper bounds on the
Wasserstein distance between the true joint of prediction and measurement
and its Gaussian approximation. Exact empirical W1 oracles and closed-form
Gaussian distances are included for validating every bound.
"""

from .bounds import (
    MODES,
    BoundError,
    BoundReport,
    CovSandwich,
    DerivativeMoments,
    covariance_sandwich,
    derivative_moment_sums,
    joint_output_moments,
    mean_measurement,
    projection_distance_bound,
    second_order_poincare_bound,
    total_wasserstein_bound,
)
from .dual import EvalDomainError
from .expressions import (
    Dual2,
    ExprAst,
    ParseError,
    VectorFunction,
    eval_dual2,
    eval_dual2_batch,
    eval_jacobian_batch,
    eval_value,
    eval_value_batch,
    parse_expr,
    substitute,
    to_source,
)
from .linalg import (
    SAMPLE_CHUNK,
    Gaussian,
    SpdMatrix,
    chol_sample,
    loewner_geq,
    spd_sqrt,
    spectral_norm,
    standard_normal_chunks,
    trace_sqrt_sandwich,
)
from .moments import (
    GaussHermite,
    JointGaussian,
    MonteCarlo,
    QuadratureScheme,
    gauss_expect,
    joint_approx,
    predict,
    project_gaussian,
    update,
    worker_count,
)
from .statespace import (
    NonlinearSSM,
    augmented_jacobian,
    composite_map,
    lift_transform,
    lifted_input,
)
from .wasserstein import (
    DistanceReport,
    empirical_w1,
    kl_joint,
    matched_distances,
    w1_centered_upper,
    w1_from_w2,
    w2_gaussian,
)

__version__ = "0.1.0"

__all__ = [
    "BoundError",
    "BoundReport",
    "CovSandwich",
    "DerivativeMoments",
    "DistanceReport",
    "Dual2",
    "EvalDomainError",
    "ExprAst",
    "Gaussian",
    "GaussHermite",
    "JointGaussian",
    "MODES",
    "MonteCarlo",
    "NonlinearSSM",
    "ParseError",
    "QuadratureScheme",
    "SAMPLE_CHUNK",
    "SpdMatrix",
    "VectorFunction",
    "augmented_jacobian",
    "chol_sample",
    "composite_map",
    "covariance_sandwich",
    "derivative_moment_sums",
    "empirical_w1",
    "eval_dual2",
    "eval_dual2_batch",
    "eval_jacobian_batch",
    "eval_value",
    "eval_value_batch",
    "gauss_expect",
    "joint_approx",
    "joint_output_moments",
    "kl_joint",
    "lift_transform",
    "lifted_input",
    "loewner_geq",
    "matched_distances",
    "mean_measurement",
    "parse_expr",
    "predict",
    "project_gaussian",
    "projection_distance_bound",
    "second_order_poincare_bound",
    "spd_sqrt",
    "spectral_norm",
    "standard_normal_chunks",
    "substitute",
    "to_source",
    "total_wasserstein_bound",
    "trace_sqrt_sandwich",
    "update",
    "w1_centered_upper",
    "w1_from_w2",
    "w2_gaussian",
    "worker_count",
]
