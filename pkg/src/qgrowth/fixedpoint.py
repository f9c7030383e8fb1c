"""Fixed-point map, truncated nonlinearity, full Newton solves and solution ordering.

``apply_T`` freezes the right-hand side at ``u`` and solves the resulting
Dirichlet problem; its fixed points are the solutions.  ``solve_full`` runs
damped Newton on the residual directly.  ``minimal_solution`` searches a
sub/supersolution sandwich for its smallest solution among those it can
reach, with the gradient and value truncation of the right-hand side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .calculus import gradient_centered, stencils
from .dirichlet import SolveReport, sign_check, solve_dirichlet, solve_linear
from .errors import ConvergenceError, PreconditionError, SaturationError, ValidationError
from .mesh import Grid
from .operators import (
    ProblemSpec,
    _node_rows,
    effective_tol,
    linearize_F,
    problem_linearization,
    quadratic_term,
)

logger = logging.getLogger(__name__)

BLOWUP_CAP = 1e6
MIN_STEP = 2.0**-20
SIGN_TOL = 1e-8


def apply_T(u, P: ProblemSpec, tol: float | None = None) -> np.ndarray:
    """Solve ``-F[U] = lam c u + Q[u] + h`` with the right-hand side frozen at ``u``."""
    u = np.asarray(u, dtype=float)
    g = P.grid
    q, _ = quadratic_term(g, P.M, u, P.lam_P, P.quadratic_scheme)
    f = np.zeros(g.size)
    f[g.interior] = P.lam * P.c[g.interior] * u[g.interior] + q + P.h[g.interior]
    rep = solve_dirichlet(P.operator, f, g, tol)
    if not rep.converged:
        raise ConvergenceError(f"frozen Dirichlet solve failed ({rep.reason})", rep)
    return rep.solution


def _residual_or_none(P: ProblemSpec, u):
    try:
        return problem_linearization(P, u)
    except SaturationError:
        return None


def solve_full(P: ProblemSpec, seed=None, tol: float = 1e-10, max_iter: int = 100,
               blowup: float = BLOWUP_CAP) -> SolveReport:
    """Damped Newton on the full residual, starting from ``seed`` (zero by default).

    Armijo backtracking on the Euclidean residual norm halves the step down to
    ``2**-20``; failure to decrease, a saturated exponential or an iterate
    beyond ``blowup`` ends the solve with the best iterate.
    """
    g = P.grid
    idx = g.interior
    u = np.zeros(g.size) if seed is None else np.asarray(seed, dtype=float).copy()
    u[g.boundary] = 0.0
    sysl = _residual_or_none(P, u)
    if sysl is None:
        return SolveReport(u, np.inf, 0, 0, False, tol, tol, "saturated seed")
    rnorm = float(np.max(np.abs(sysl.residual), initial=0.0))
    best_u, best_r = u.copy(), rnorm
    history = [rnorm]
    lin_iters = 0
    eff = effective_tol(tol, sysl.scale)
    for it in range(max_iter + 1):
        eff = effective_tol(tol, sysl.scale)
        if rnorm <= eff:
            return SolveReport(u, rnorm, it, lin_iters, True, tol, eff, "converged", history=history)
        if it == max_iter:
            break
        try:
            d, k = solve_linear(sysl.jac, -sysl.residual)
        except RuntimeError:
            return SolveReport(best_u, best_r, it, lin_iters, False, tol, eff, "singular Jacobian",
                               history=history)
        lin_iters += k
        if not np.all(np.isfinite(d)):
            return SolveReport(best_u, best_r, it, lin_iters, False, tol, eff, "singular Jacobian",
                               history=history)
        r0 = float(np.linalg.norm(sysl.residual))
        step = 1.0
        while True:
            trial = u.copy()
            trial[idx] += step * d
            tsys = _residual_or_none(P, trial)
            if tsys is not None and np.linalg.norm(tsys.residual) <= (1 - 1e-4 * step) * r0:
                break
            step *= 0.5
            if step < MIN_STEP:
                return SolveReport(best_u, best_r, it, lin_iters, False, tol, eff, "line search failed",
                                   history=history)
        u, sysl = trial, tsys
        rnorm = float(np.max(np.abs(sysl.residual), initial=0.0))
        history.append(rnorm)
        if rnorm < best_r:
            best_u, best_r = u.copy(), rnorm
        if np.max(np.abs(u)) > blowup:
            return SolveReport(best_u, best_r, it + 1, lin_iters, False, tol, eff, "blow-up",
                               history=history)
    return SolveReport(best_u, best_r, max_iter, lin_iters, False, tol, eff, "iteration budget",
                       history=history)


# ---------------------------------------------------------------------------
# Truncation


@dataclass(frozen=True, eq=False)
class Truncation:
    """Gradient cap ``R`` and ordered sandwich ``alpha <= beta``."""

    R: float
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        if not self.R > 0:
            raise ValidationError(f"gradient cap R must be positive, got {self.R}")
        if a.shape != b.shape:
            raise ValidationError("alpha and beta must live on the same grid")
        if np.any(a > b):
            k = int(np.argmax(a - b))
            raise ValidationError(f"alpha exceeds beta at node {k}")

    def check_gradients(self, grid: Grid) -> None:
        gmax = max(float(np.max(np.linalg.norm(gradient_centered(grid, f), axis=1)))
                   for f in (self.alpha, self.beta))
        if gmax >= self.R:
            raise ValidationError(f"R={self.R} does not exceed the sandwich gradients ({gmax:.4g})")


def _truncated_quadratic(P: ProblemSpec, u, R: float):
    g = P.grid
    q, Jq = quadratic_term(g, P.M, u, P.lam_P, P.quadratic_scheme)
    p = gradient_centered(g, u)
    p2 = np.sum(p**2, axis=1)
    Mv = _node_rows(P.M.values, g, 2)
    mpp = np.einsum("ni,nij,nj->n", p, Mv, p)
    capped = np.where(p2 > 0, mpp * R**2 / np.where(p2 > 0, p2, 1.0), 0.0)
    cut = (p2 >= R**2) & (capped < q)
    return np.where(cut, capped, q), Jq, cut


def truncated_rhs(u, T: Truncation, P: ProblemSpec) -> np.ndarray:
    """Truncated right-hand side at interior nodes.

    Where ``|Du| >= R`` the quadratic term ``<M Du, Du>`` is replaced by
    ``<M Du, Du> R^2/|Du|^2`` (never exceeding the untruncated discrete term);
    where ``u`` leaves ``[alpha, beta]`` the whole right-hand side is frozen at
    ``alpha`` (resp. ``beta``), its value and its gradient.
    """
    return _truncated_parts(u, T, P)[0]


def _truncated_parts(u, T: Truncation, P: ProblemSpec):
    g = P.grid
    u = np.asarray(u, dtype=float)
    ci, hi = P.c[g.interior], P.h[g.interior]

    def fbar(w):
        q, Jq, cut = _truncated_quadratic(P, w, T.R)
        return hi + P.lam * ci * w[g.interior] + q, Jq, cut

    fu, Jq, cut = fbar(u)
    fa, _, _ = fbar(T.alpha)
    fb, _, _ = fbar(T.beta)
    ui = u[g.interior]
    below = ui < T.alpha[g.interior]
    above = ui > T.beta[g.interior]
    out = np.where(below, fa, np.where(above, fb, fu))
    return out, Jq, cut, below | above


def solve_truncated(P: ProblemSpec, T: Truncation, seed, tol: float = 1e-10,
                    max_iter: int = 100) -> SolveReport:
    """Damped Newton on ``F[u] + f~(u) = 0``; frozen nodes drop out of the Jacobian."""
    g = P.grid
    idx = g.interior
    st = stencils(g)
    u = np.asarray(seed, dtype=float).copy()
    u[g.boundary] = 0.0

    def system(w):
        lin = linearize_F(P.operator, g, w)
        f, Jq, cut, frozen = _truncated_parts(w, T, P)
        active = (~frozen & ~cut).astype(float)
        J = lin.jac + sp.diags(active) @ (Jq + sp.diags(P.lam * P.c[idx]) @ st.restrict)
        scale = float(abs(lin.jac).sum(axis=1).max()) * float(np.max(np.abs(w))) \
            + float(np.max(np.abs(f), initial=0.0))
        return lin.values + f, sp.csc_matrix(J)[:, idx], scale

    try:
        r, J, scale = system(u)
    except SaturationError:
        return SolveReport(u, np.inf, 0, 0, False, tol, tol, "saturated seed")
    best_u, best_r = u.copy(), float(np.max(np.abs(r)))
    hist = [best_r]
    lin_iters = 0
    for it in range(max_iter + 1):
        eff = effective_tol(tol, scale)
        rn = float(np.max(np.abs(r)))
        if rn <= eff:
            return SolveReport(u, rn, it, lin_iters, True, tol, eff, "converged", history=hist)
        if it == max_iter:
            break
        d, k = solve_linear(J, -r)
        lin_iters += k
        r0 = float(np.linalg.norm(r))
        step = 1.0
        while True:
            trial = u.copy()
            trial[idx] += step * d
            try:
                tr, tJ, tscale = system(trial)
                if np.linalg.norm(tr) <= (1 - 1e-4 * step) * r0:
                    break
            except SaturationError:
                pass
            step *= 0.5
            if step < MIN_STEP:
                return SolveReport(best_u, best_r, it, lin_iters, False, tol, eff,
                                   "line search failed", history=hist)
        u, r, J, scale = trial, tr, tJ, tscale
        rn = float(np.max(np.abs(r)))
        hist.append(rn)
        if rn < best_r:
            best_u, best_r = u.copy(), rn
    return SolveReport(best_u, best_r, max_iter, lin_iters, False, tol, effective_tol(tol, scale),
                       "iteration budget", history=hist)


def minimal_solution(T: Truncation, P: ProblemSpec, tol: float = 1e-10,
                     max_rounds: int = 10) -> SolveReport:
    """Smallest solution found in ``[alpha, beta]`` by monotone refinement.

    Each round solves the truncated problem from ``alpha`` and from the
    midpoint of the current sandwich, keeps the converged candidates that lie
    in the sandwich and tightens ``beta`` to the pointwise-smallest one.  The
    report's ``extras`` hold the candidates and whether they were ordered.
    """
    g = P.grid
    ok_a, sa, na = sign_check(T.alpha, P, "sub", SIGN_TOL)
    ok_b, sb, nb = sign_check(T.beta, P, "super", SIGN_TOL)
    if not ok_a:
        raise PreconditionError(f"alpha is not a subsolution (slack {sa:.3g} at node {na})")
    if not ok_b:
        raise PreconditionError(f"beta is not a supersolution (slack {sb:.3g} at node {nb})")
    beta = T.beta.copy()
    candidates: list[np.ndarray] = []
    ordered = True
    best: SolveReport | None = None
    for rnd in range(max_rounds):
        Tk = Truncation(T.R, T.alpha, beta)
        found = []
        for seed in (T.alpha, 0.5 * (T.alpha + beta)):
            rep = solve_truncated(P, Tk, seed, tol)
            if not rep.converged:
                continue
            s = rep.solution
            slack = rep.effective_tol + tol
            if np.all(s >= T.alpha - slack) and np.all(s <= beta + slack):
                found.append(rep)
        if not found:
            break
        for rep in found:
            for other in candidates:
                if not (np.all(rep.solution <= other + 1e-8) or np.all(rep.solution >= other - 1e-8)):
                    ordered = False
            candidates.append(rep.solution)
        low = min(found, key=lambda r: float(np.sum(r.solution)))
        improved = best is None or np.any(low.solution < best.solution - 1e-9)
        if best is None or float(np.sum(low.solution)) < float(np.sum(best.solution)):
            best = low
        if not improved:
            break
        # the solution may dip below alpha by round-off; keep the sandwich ordered
        beta = np.maximum(np.minimum(beta, best.solution), T.alpha)
        logger.debug("minimal_solution round %d: tightened beta", rnd)
    if best is None:
        rep = SolveReport(T.alpha.copy(), np.inf, 0, 0, False, tol, tol, "no solution in sandwich")
        rep.extras.update(candidates=[], ordered=True)
        return rep
    best.extras.update(candidates=candidates, ordered=ordered)
    return best


def strictly_below(u, v, grid: Grid, atol: float = 0.0) -> bool:
    """Strict order: ``u < v`` inside, and on the boundary either ``u < v`` or
    equality with a strictly smaller inward difference quotient.

    Boundary nodes with no interior neighbor only need ``u <= v``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.all(u[grid.interior] < v[grid.interior]):
        return False
    b = grid.boundary
    less = u[b] < v[b] - atol
    equal = np.abs(u[b] - v[b]) <= atol
    nb = grid.inward_neighbor
    du = (u[nb] - u[b]) / grid.inward_step
    dv = (v[nb] - v[b]) / grid.inward_step
    blind = ~grid.facing_interior
    return bool(np.all(less | (equal & ((du < dv) | blind))))
