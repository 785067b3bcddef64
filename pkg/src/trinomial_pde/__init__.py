"""Monotone trinomial schemes for fully nonlinear parabolic PDEs.

Two solvers share one scheme: an exact recombining lattice (``lattice``) for
low dimension and least-squares Monte Carlo (``lsmc``) for high dimension.
"""

from ._accel import BACKEND
from .generator import PdeProblem, get_problem, matrix_interval_sup
from .kernels import SparsityMask, TrinomialSpec
from .params import GeneratorBounds, MonotonicityParams, MonotonicityWarning, build_params

__all__ = [
    "BACKEND",
    "GeneratorBounds",
    "MonotonicityParams",
    "MonotonicityWarning",
    "PdeProblem",
    "SparsityMask",
    "TrinomialSpec",
    "build_params",
    "get_problem",
    "matrix_interval_sup",
]

__version__ = "0.1.0"
