"""Dirichlet problems for fully nonlinear elliptic operators with quadratic gradient growth.

The package discretizes

    -F(x, u, Du, D^2u) = lam * c(x) u + <M(x) Du, Du> + h(x),   u = 0 on the boundary,

for Pucci, linear, HJB and Isaacs operators on 1D intervals and 2D rectangles or
disks.  It traces solution branches in ``lam`` (and in an auxiliary forcing
parameter ``k``), locates folds, computes principal eigenpairs of the extremal
operator and checks a priori bounds, comparison, strong maximum principle and
barrier constructions against independent oracles.
"""

from __future__ import annotations

from .errors import (
    ConfigurationError,
    DomainError,
    PreconditionError,
    QGrowthError,
    SaturationError,
    UnsupportedReductionError,
    ValidationError,
)
from .mesh import Grid, build_interval_grid, build_planar_grid
from .operators import (
    Ellipticity,
    LinearMember,
    MatrixField,
    OperatorSpec,
    ProblemSpec,
    apply_F,
    extremal_L,
    pucci_minus,
    pucci_plus,
    residual_P,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "Ellipticity",
    "Grid",
    "LinearMember",
    "MatrixField",
    "OperatorSpec",
    "PreconditionError",
    "ProblemSpec",
    "QGrowthError",
    "SaturationError",
    "UnsupportedReductionError",
    "ValidationError",
    "apply_F",
    "build_interval_grid",
    "build_planar_grid",
    "extremal_L",
    "pucci_minus",
    "pucci_plus",
    "residual_P",
]
