"""Minimal translations that make convex sets intersect, and minimal
right-hand-side repairs that make convex inequality systems consistent."""

__version__ = "0.1.0"

from .convexsets import (AffineSubspace, Ball, Box, ConvexSet, Halfspace, Hyperplane,  # noqa: E402
                         Polyhedron, SublevelSet, sublevel_set)
from .coremath import WeightedPNorm, pnorm, positive_part, weighted_pnorm  # noqa: E402
from .cvxfeas import (BoundData, ConvexSystem, DistanceBounds, ascoli_lower,  # noqa: E402
                      ascoli_upper, bound_distance, minimize_residual, residual_value)
from .errors import (ConvergenceError, DomainError, InvalidInputError,  # noqa: E402
                     PreconditionError, UnsupportedSizeError)
from .linexact import (LinearSystem, RepairCertificate, solve_exact,  # noqa: E402
                       solve_qp_reference, verify_kkt)
from .simproj import SimProjProblem, SimProjSolution, solve  # noqa: E402

__all__ = [
    "AffineSubspace", "Ball", "Box", "ConvexSet", "Halfspace", "Hyperplane", "Polyhedron",
    "SublevelSet", "sublevel_set", "WeightedPNorm", "pnorm", "positive_part", "weighted_pnorm",
    "BoundData", "ConvexSystem", "DistanceBounds", "ascoli_lower", "ascoli_upper",
    "bound_distance", "minimize_residual", "residual_value", "ConvergenceError", "DomainError",
    "InvalidInputError", "PreconditionError", "UnsupportedSizeError", "LinearSystem",
    "RepairCertificate", "solve_exact", "solve_qp_reference", "verify_kkt", "SimProjProblem",
    "SimProjSolution", "solve",
]
