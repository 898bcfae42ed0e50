"""conset: set-membership estimation for polynomial ODEs.

Computes guaranteed outer and inner approximations of the set of initial
conditions and parameters consistent with bounded measurements, and
emptiness certificates when no consistent point exists.  The continuous
dynamics are encoded through occupation measures; approximations come from
a converging hierarchy of sum-of-squares programs solved as semidefinite
programs.
"""

from conset.poly import (
    DegreeCapError,
    Monomial,
    Polynomial,
    VarSpace,
    liouville_apply,
    monomial_basis,
)

__version__ = "0.1.0"

__all__ = [
    "DegreeCapError",
    "Monomial",
    "Polynomial",
    "VarSpace",
    "liouville_apply",
    "monomial_basis",
    "__version__",
]
