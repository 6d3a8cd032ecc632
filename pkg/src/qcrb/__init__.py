"""Quantum Cramer-Rao bounds for canonical families: logarithmic
derivatives, information matrices, lower bounds, measurement error
matrices and efficiency audits.
"""

__version__ = "0.1.0"

from . import audit, bounds, logderiv, matkernel, povm, states
from .config import DEFAULT_TOL, Tolerances
from .errors import *  # noqa: F401,F403

__all__ = ["audit", "bounds", "logderiv", "matkernel", "povm", "states", "DEFAULT_TOL", "Tolerances",
           "__version__"]
