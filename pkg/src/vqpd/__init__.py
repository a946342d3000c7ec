"""Virtual-queue primal-dual solvers for constrained composite convex programs."""

from .kernels import get_backend, set_backend, use_backend
from .problem import BoxSet, ProblemSpec, SeparableTerm
from .solvers import ALGORITHMS, NumericalError, SolverConfig, run

__all__ = [
    "ALGORITHMS",
    "BoxSet",
    "NumericalError",
    "ProblemSpec",
    "SeparableTerm",
    "SolverConfig",
    "get_backend",
    "run",
    "set_backend",
    "use_backend",
]

__version__ = "0.1.0"
