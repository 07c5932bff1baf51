"""Differentiable ADMM solver for dense convex quadratic programs."""
from .errors import *  # noqa: F401,F403
from .problem import (QpProblem, Settings, augment_full_rank, generate_random_box_qp,
                      generate_random_qp, validate)
from .solver import SolveResult, solve

__all__ = [
    "QpProblem", "Settings", "SolveResult", "augment_full_rank", "generate_random_box_qp",
    "generate_random_qp", "solve", "validate",
]
