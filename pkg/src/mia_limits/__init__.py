"""Statistical limits of membership inference attacks.

Exact worst-case security for discrete data, weighted f-divergence
machinery, an enumeration oracle, empirical-mean bounds and overfitting
simulations with interpolating regressors.
"""

from .core_types import (
    AttackWeights,
    Bound,
    DiscreteDistribution,
    DomainError,
    GuardError,
    JointDistribution,
    MiaLimitsError,
    SecurityReport,
)

__version__ = "0.1.0"

__all__ = [
    "AttackWeights",
    "Bound",
    "DiscreteDistribution",
    "DomainError",
    "GuardError",
    "JointDistribution",
    "MiaLimitsError",
    "SecurityReport",
    "__version__",
]
