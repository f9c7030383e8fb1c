"""Exponential changes of the unknown and the semilinear reduction.

With ``v = (e^{mu} - 1)/m`` one has ``Dv = (1 + mv) Du`` and
``D^2v = (1 + mv)(D^2u + m Du (x) Du)``, so the quadratic gradient term is
absorbed into the second-order part.  The ``w = (1 - e^{-mu})/m`` change does
the same with the opposite sign.  For an isotropic linear operator and
``M = mu I`` the reduction is exact and yields a semilinear problem without
gradient terms, used by :mod:`qgrowth.oracle` as an independent reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .calculus import gradient_centered, hessian_centered
from .errors import DomainError, SaturationError, UnsupportedReductionError, ValidationError
from .mesh import Grid
from .operators import EXP_LIMIT, Ellipticity, ProblemSpec, pucci_minus, pucci_plus

DIRECTIONS = ("v", "w")


@dataclass(frozen=True)
class ExpChange:
    """``v``-change ``u -> (e^{mu} - 1)/m`` or ``w``-change ``u -> (1 - e^{-mu})/m``."""

    m: float
    direction: str = "v"

    def __post_init__(self):
        if not (np.isfinite(self.m) and self.m > 0):
            raise ValidationError(f"exponential change needs m > 0, got {self.m}")
        if self.direction not in DIRECTIONS:
            raise ValidationError(f"direction must be 'v' or 'w', got {self.direction!r}")

    @classmethod
    def for_lower_bound(cls, mu1: float, Lam_P: float) -> "ExpChange":
        """``w``-change with ``m = mu1 / Lam_P`` (bounds on the negative part)."""
        return cls(mu1 / Lam_P, "w")

    @classmethod
    def for_upper(cls, mu2: float, lam_P: float) -> "ExpChange":
        """``v``-change with ``m = mu2 / lam_P``."""
        return cls(mu2 / lam_P, "v")


def forward(u, change: ExpChange) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    a = change.m * u if change.direction == "v" else -change.m * u
    if a.size and np.max(a) > EXP_LIMIT:
        node = int(np.argmax(a))
        raise SaturationError(f"exponent {a.flat[node]:.4g} at node {node} exceeds {EXP_LIMIT}", node)
    if change.direction == "v":
        return np.expm1(a) / change.m
    return -np.expm1(a) / change.m


def inverse(t, change: ExpChange) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    arg = change.m * t if change.direction == "v" else -change.m * t
    bad = np.flatnonzero(~(1.0 + arg > 0))
    if bad.size:
        node = int(bad[0])
        side = "1 + m t" if change.direction == "v" else "1 - m t"
        raise DomainError(f"inverse change undefined: {side} <= 0 at node {node}", node)
    if change.direction == "v":
        return np.log1p(arg) / change.m
    return -np.log1p(arg) / change.m


@dataclass(frozen=True)
class SandwichReport:
    """Worst violation of the two-sided bound of the transformed Pucci terms."""

    max_violation: float
    worst_node: int
    worst_sign: int
    lower_gap: float
    upper_gap: float


def sandwich_check(grid: Grid, u, change: ExpChange, E: Ellipticity) -> SandwichReport:
    """Check ``M(D^2u) + s_lo|Du|^2 <= M(D^2t)/(1 +- m t) <= M(D^2u) + s_hi|Du|^2``.

    ``M`` is each Pucci operator, ``t`` the transformed function and the slopes
    are ``(m lam, m Lam)`` for the ``v``-change and ``(-m Lam, -m lam)`` for the
    ``w``-change.  ``lower_gap``/``upper_gap`` are the smallest slacks (negative
    when violated).
    """
    u = np.asarray(u, dtype=float)
    t = forward(u, change)
    m = change.m
    Hu = hessian_centered(grid, u)
    Ht = hessian_centered(grid, t)
    g2 = np.sum(gradient_centered(grid, u) ** 2, axis=1)
    ti = t[grid.interior]
    if change.direction == "v":
        denom, slo, shi = 1.0 + m * ti, m * E.lam, m * E.Lam
    else:
        denom, slo, shi = 1.0 - m * ti, -m * E.Lam, -m * E.lam
    worst, wnode, wsign = 0.0, -1, 0
    lo_gap, hi_gap = np.inf, np.inf
    for sign, op in ((1, pucci_plus), (-1, pucci_minus)):
        base = np.atleast_1d(op(Hu, E))
        mid = np.atleast_1d(op(Ht, E)) / denom
        lo = base + slo * g2
        hi = base + shi * g2
        lo_gap = min(lo_gap, float(np.min(mid - lo)))
        hi_gap = min(hi_gap, float(np.min(hi - mid)))
        viol = np.maximum(np.maximum(lo - mid, mid - hi), 0.0)
        k = int(np.argmax(viol))
        if viol[k] > worst or wnode < 0:
            worst, wnode, wsign = float(viol[k]), int(grid.interior[k]), sign
    return SandwichReport(worst, wnode, wsign, lo_gap, hi_gap)


@dataclass(frozen=True)
class SemilinearProblem:
    """``-a0 (Laplacian v + drift . Dv/(a0)) = g(x, v)`` after the exponential change.

    ``g(v) = (lam/m) c (1 + m v) ln(1 + m v) + h (1 + m v)``.  ``a0`` is the
    isotropic diffusion coefficient and ``m = mu / a0``.
    """

    grid: Grid
    m: float
    a0: float
    lam: float
    c: np.ndarray
    h: np.ndarray
    drift: np.ndarray | None
    c_fn: Callable | None
    h_fn: Callable | None

    def rhs(self, v, c=None, h=None, lam=None) -> np.ndarray:
        c = self.c if c is None else c
        h = self.h if h is None else h
        lam = self.lam if lam is None else lam
        s = 1.0 + self.m * np.asarray(v, dtype=float)
        if np.any(s <= 0):
            raise DomainError("reduced right-hand side needs 1 + m v > 0")
        return (lam / self.m) * c * s * np.log(s) + h * s

    def to_u(self, v) -> np.ndarray:
        return inverse(v, ExpChange(self.m, "v"))

    def to_v(self, u) -> np.ndarray:
        return forward(u, ExpChange(self.m, "v"))


def semilinear_reduction(P: ProblemSpec) -> SemilinearProblem:
    """Exact reduction for ``F = a0 * Laplacian (+ drift)`` and constant ``M = mu I``.

    Pucci kinds qualify only when ``lam_P == Lam_P`` without drift or
    zero-order bounds, since only then the change of variables is an identity
    rather than an inequality.
    """
    op = P.operator
    if not P.M.is_constant_scalar:
        raise UnsupportedReductionError("reduction needs a spatially constant scalar matrix M = mu I")
    mu = float(P.M.values.reshape(-1, P.grid.dim, P.grid.dim)[0, 0, 0])
    dim = P.grid.dim
    drift = None
    if op.kind == "linear":
        mem = op.members[0]
        a = mem.a if mem.a.ndim == 3 else mem.a[None]
        a0 = float(a[0, 0, 0])
        if not np.allclose(a, a0 * np.eye(dim), rtol=0, atol=1e-14):
            raise UnsupportedReductionError("reduction needs an isotropic constant diffusion a0 I")
        if mem.zero is not None and np.any(np.asarray(mem.zero) != 0):
            raise UnsupportedReductionError("reduction does not handle zero-order terms")
        if mem.drift is not None and np.any(mem.drift != 0):
            drift = np.asarray(mem.drift, dtype=float)
    elif op.kind in ("pucci_plus", "pucci_minus"):
        E = op.ellipticity
        if E.lam != E.Lam or np.any(np.asarray(op.b) != 0) or np.any(np.asarray(op.d) != 0):
            raise UnsupportedReductionError(
                "Pucci operators reduce exactly only when lam_P == Lam_P and b = d = 0")
        a0 = E.lam
    else:
        raise UnsupportedReductionError(f"no exact reduction for operator kind {op.kind!r}")
    return SemilinearProblem(P.grid, mu / a0, a0, P.lam, P.c.copy(), P.h.copy(), drift,
                             P.c_fn, P.h_fn)
