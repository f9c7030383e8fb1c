"""Principal weighted eigenpair of the minimal extremal operator and a simplicity test.

The eigenpair ``(lambda1, phi1)`` solves ``L[phi1] + lambda1 c phi1 = 0`` with
``phi1 > 0`` inside and ``phi1 = 0`` on the boundary.  It is computed by
nonlinear inverse power iteration: each step solves the Dirichlet problem
``-L[psi] = c phi`` and renormalizes.  Positive homogeneity of ``L`` makes the
iteration well defined without linearization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .dirichlet import solve_dirichlet
from .errors import PreconditionError, ValidationError
from .mesh import Grid
from .operators import OperatorSpec, apply_F, effective_tol, linearize_F

logger = logging.getLogger(__name__)


@dataclass
class EigenPair:
    """Principal eigenvalue and max-normalized positive eigenfunction.

    ``bounds`` are the min/max node ratios ``-L[phi]/(c phi)`` over nodes with
    ``c > 0``; they enclose ``lambda1`` when ``phi`` is positive.
    """

    lambda1: float
    phi1: np.ndarray
    residual: float
    converged: bool
    iterations: int
    effective_tol: float
    bounds: tuple[float, float] = (np.nan, np.nan)
    history: list[float] = field(default_factory=list)


def principal_eigenpair(op: OperatorSpec, c, grid: Grid, tol: float = 1e-8, seed=None,
                        max_iter: int = 500) -> EigenPair:
    """Inverse power iteration for the principal weighted eigenpair of ``op``."""
    c = np.broadcast_to(np.asarray(c, dtype=float), (grid.size,)).copy()
    if np.any(c < 0) or not np.any(c[grid.interior] > 0):
        raise ValidationError("eigen weight c must be nonnegative and positive somewhere")
    idx = grid.interior
    phi = grid.distance.copy() if seed is None else np.abs(np.asarray(seed, dtype=float)).copy()
    phi[grid.boundary] = 0.0
    if not np.any(phi[idx] > 0):
        raise ValidationError("eigen seed must be positive somewhere inside")
    phi /= np.max(phi)
    ci = c[idx]
    history: list[float] = []
    lam, res, eff = np.nan, np.inf, tol
    for it in range(1, max_iter + 1):
        rep = solve_dirichlet(op, c * phi, grid, tol=min(tol, 1e-10) * 1e-2)
        psi = rep.solution
        top = float(np.max(psi))
        if not top > 0:
            raise PreconditionError("inverse iteration produced a nonpositive iterate")
        phi = psi / top
        lin = linearize_F(op, grid, phi)
        cphi = ci * phi[idx]
        lam = -float(lin.values @ cphi) / float(cphi @ cphi)
        history.append(lam)
        r = lin.values + lam * cphi
        res = float(np.max(np.abs(r)))
        scale = float(abs(lin.jac).sum(axis=1).max()) + abs(lam) * float(np.max(ci))
        eff = effective_tol(tol, scale)
        if res <= eff and it > 1:
            break
    else:
        logger.warning("principal_eigenpair: no convergence in %d iterations (residual %.3g)",
                       max_iter, res)
        return EigenPair(lam, phi, res, False, max_iter, eff, _cw_bounds(op, grid, phi, c), history)
    return EigenPair(lam, phi, res, True, it, eff, _cw_bounds(op, grid, phi, c), history)


def _cw_bounds(op: OperatorSpec, grid: Grid, phi, c) -> tuple[float, float]:
    idx = grid.interior
    Lphi = apply_F(op, grid, phi)
    mask = (c[idx] > 0) & (phi[idx] > 0)
    if not np.any(mask):
        return (np.nan, np.nan)
    ratio = -Lphi[mask] / (c[idx][mask] * phi[idx][mask])
    return float(np.min(ratio)), float(np.max(ratio))


@dataclass(frozen=True)
class SimplicityReport:
    """Best positive multiple ``t`` with ``u ~ t v`` and the residual deviation."""

    t: float
    deviation: float
    precondition_ok: bool
    message: str


def simplicity_check(u, v, c, grid: Grid, op: OperatorSpec, tol: float = 1e-8) -> SimplicityReport:
    """Test proportionality of a positive supersolution ``u`` and a subsolution ``v``.

    ``u`` must satisfy ``L[u] + c u <= tol`` with ``u > 0`` inside; ``v`` must
    satisfy ``L[v] + c v >= -tol``, ``v <= tol`` on the boundary and be
    positive somewhere.  The eigenvalue is expected to be folded into ``c``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), (grid.size,))
    idx = grid.interior
    ru = apply_F(op, grid, u) + c[idx] * u[idx]
    rv = apply_F(op, grid, v) + c[idx] * v[idx]
    problems = []
    if np.max(ru) > tol:
        problems.append(f"u violates the supersolution inequality by {np.max(ru):.3g}")
    if np.min(u[idx]) <= 0:
        problems.append("u is not positive inside")
    if np.min(rv) < -tol:
        problems.append(f"v violates the subsolution inequality by {-np.min(rv):.3g}")
    if np.max(v[grid.boundary], initial=-np.inf) > tol:
        problems.append("v is positive on the boundary")
    if not np.max(v[idx]) > 0:
        problems.append("v is nonpositive everywhere")
    if problems:
        return SimplicityReport(np.nan, np.nan, False, "; ".join(problems))
    # minimize s subject to |u_i - t v_i| <= s, t >= 0: a two-variable linear program
    A = np.block([[-v[:, None], -np.ones((v.size, 1))], [v[:, None], -np.ones((v.size, 1))]])
    b = np.concatenate([-u, u])
    lp = linprog([0.0, 1.0], A_ub=A, b_ub=b, bounds=[(0, None), (0, None)], method="highs")
    t = float(lp.x[0])
    return SimplicityReport(t, float(np.max(np.abs(u - t * v))), True, "ok")
