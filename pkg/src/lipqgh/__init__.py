"""Executable finite-dimensional Lip-normed operator systems."""
from .opsys_core import (
    MatrixStar, OperatorSubsystem, ProductDefect, State, kadison_hat, order_norm, osc_seminorm,
    product_defect,
)
from .seminorm import (
    Bridge, Grow, LinearMapNorm, LipNormedSystem, Max, QuotientByUnit, RadiusInterval, Scale,
    SeminormSpec, dual_seminorm, evaluate, kernel_is_unit_line, lip_norm, radius, verify_bridge,
)
from .convex_opt import BallSpec, SolveResult, SolverConfig, max_nonconcave, project_to_ball, support
from .metric_geometry import (
    BridgePair, HausdorffBound, MatrixState, coupling_defect, dist_upper, hausdorff_states, rho_states, rho_ucp,
)
from .cstar_analysis import (
    EpsCurve, LimitVerdict, SeminormFamily, eps_distance, epsilon_curve, f_leibniz_equivalence_check,
    leibniz_constant_lower, limit_system, state_space_shape,
)

__version__ = "0.1.0"
