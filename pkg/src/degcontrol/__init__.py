"""Numerical workbench for boundary control of degenerate parabolic systems.

Modules
-------
special_functions  gamma, Bessel J_nu, derivatives and zeros
spectrum           eigenpairs of -(x^a u')' and boundary traces
kalman             block matrices, rank tests, spectrum rearrangement
solver_1d          modal and finite-volume solvers for the 1-d system
moment             biorthogonal families and 1-d null controls
lr2d               Lebeau-Robbiano controller on the unit square
cli                command line experiment runner
"""

from .errors import (
    DomainError,
    NumericalError,
    ConditioningError,
    ControllabilityError,
    ConfigurationError,
)

__all__ = [
    "DomainError",
    "NumericalError",
    "ConditioningError",
    "ControllabilityError",
    "ConfigurationError",
]
__version__ = "0.1.0"
