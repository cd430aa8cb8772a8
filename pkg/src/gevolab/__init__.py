"""Numerical laboratory for degenerate third-order evolution equations.

The package classifies model Cauchy problems by their well-posedness space,
constructs the weight symbols used to transform them, discretizes the
associated infinite-order operators on a periodic grid, and runs evolution
experiments that check energy estimates and growth exponents.
"""

from gevolab.classification import (
    DegeneracyProfile,
    WellPosednessClass,
    classify,
    compute_q1,
    compute_q2,
    theta_range,
)

__version__ = "0.1.0"

__all__ = [
    "DegeneracyProfile",
    "WellPosednessClass",
    "classify",
    "compute_q1",
    "compute_q2",
    "theta_range",
    "__version__",
]
