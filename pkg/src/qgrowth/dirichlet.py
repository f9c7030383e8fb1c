"""Frozen Dirichlet problems ``-F[U] = f``, ``U = 0`` on the boundary, and discrete comparison.

The discrete operator is piecewise linear, so each outer iteration solves the
linear system of the currently active piece.  For the ``linear``, ``hjb_sup``
and 1D Pucci kinds this is Howard's policy iteration and terminates when the
policy stops changing.  The Isaacs kind and 2D Pucci operators use the same
step as a semismooth Newton direction with Armijo damping.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Grid
from .operators import OperatorSpec, ProblemSpec, effective_tol, linearize_F, residual_P

logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
MAX_OUTER = 200
MIN_STEP = 2.0**-20


@dataclass
class SolveReport:
    """Outcome of a discrete solve.

    ``tol`` is the requested tolerance; ``effective_tol`` raises it to the
    round-off floor of the discrete operator when that floor is larger.
    ``converged`` implies ``residual <= effective_tol``.
    """

    solution: np.ndarray
    residual: float
    iterations: int
    linear_iterations: int
    converged: bool
    tol: float
    effective_tol: float
    reason: str = ""
    policy_changes: list[int] = field(default_factory=list)
    history: list[float] = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def solve_linear(A: sp.spmatrix, rhs: np.ndarray) -> tuple[np.ndarray, int]:
    """Sparse direct solve; Jacobi-preconditioned GMRES above :data:`DIRECT_LIMIT` unknowns."""
    A = sp.csc_matrix(A)
    if A.shape[0] <= DIRECT_LIMIT:
        return spla.spsolve(A, rhs), 1
    count = [0]

    def cb(_):
        count[0] += 1

    diag = A.diagonal()
    M = sp.diags(1.0 / np.where(diag != 0, diag, 1.0))
    x, info = spla.gmres(A, rhs, M=M, rtol=1e-13, restart=200, maxiter=50, callback=cb,
                         callback_type="pr_norm")
    if info != 0:
        logger.warning("iterative linear solve did not converge (info=%d)", info)
    return x, count[0]


def _uses_damping(op: OperatorSpec, grid: Grid) -> bool:
    return op.kind == "isaacs" or (op.kind in ("pucci_plus", "pucci_minus") and grid.dim > 1)


def solve_dirichlet(op: OperatorSpec, f, grid: Grid, tol: float | None = None,
                    seed=None, max_iter: int = MAX_OUTER) -> SolveReport:
    """Solve ``F_h[U] + f = 0`` at interior nodes with ``U = 0`` on the boundary."""
    if tol is None:
        tol = 1e-10 if grid.dim == 1 else 1e-8
    if not tol > 0:
        raise ValueError("tol must be positive")
    f = np.broadcast_to(np.asarray(f, dtype=float), (grid.size,))
    fi = f[grid.interior]
    idx = grid.interior
    U = np.zeros(grid.size) if seed is None else np.asarray(seed, dtype=float).copy()
    U[grid.boundary] = 0.0
    damped = _uses_damping(op, grid)

    lin = linearize_F(op, grid, U)
    res = lin.values + fi
    best_U, best_r = U.copy(), float(np.max(np.abs(res), initial=0.0))
    history = [best_r]
    changes: list[int] = []
    lin_iters = 0
    policy = lin.policy
    eff = tol
    for it in range(1, max_iter + 1):
        A = sp.csc_matrix(lin.jac)[:, idx]
        new_i, k = solve_linear(A, -fi)
        lin_iters += k
        direction = new_i - U[idx]
        step = 1.0
        r0 = float(np.linalg.norm(res))
        while True:
            trial = U.copy()
            trial[idx] = U[idx] + step * direction
            tlin = linearize_F(op, grid, trial)
            tres = tlin.values + fi
            if not damped or np.linalg.norm(tres) <= (1 - 1e-4 * step) * r0 or step <= MIN_STEP:
                break
            step *= 0.5
        U, lin, res = trial, tlin, tres
        rnorm = float(np.max(np.abs(res), initial=0.0))
        history.append(rnorm)
        changes.append(int(np.count_nonzero(lin.policy != policy)))
        policy = lin.policy
        if rnorm < best_r:
            best_U, best_r = U.copy(), rnorm
        scale = float(abs(lin.jac).sum(axis=1).max()) * float(np.max(np.abs(U), initial=0.0)) \
            + float(np.max(np.abs(fi), initial=0.0))
        eff = effective_tol(tol, scale)
        if rnorm <= eff:
            return SolveReport(U, rnorm, it, lin_iters, True, tol, eff, "converged", changes, history)
        if not damped and changes[-1] == 0 and it > 1:
            # the next solve would repeat the last one exactly
            logger.warning("solve_dirichlet: policy fixpoint with residual %.3g above %.3g", rnorm, eff)
            return SolveReport(best_U, best_r, it, lin_iters, False, tol, eff, "stagnated",
                               changes, history)
    logger.warning("solve_dirichlet: no convergence in %d iterations (residual %.3g)", max_iter, best_r)
    return SolveReport(best_U, best_r, max_iter, lin_iters, False, tol, eff, "iteration budget",
                       changes, history)


@dataclass(frozen=True)
class ComparisonVerdict:
    """Result of checking ``alpha <= beta`` for a sub/supersolution pair."""

    passed: bool
    precondition_ok: bool
    margin: float
    worst_node: int
    message: str


def sign_check(u, P: ProblemSpec, kind: str, tol: float) -> tuple[bool, float, int]:
    """Check that ``u`` is a discrete sub- (``kind="sub"``) or supersolution of ``P``.

    Subsolution: interior residual ``>= -tol`` and ``u <= tol`` on the boundary;
    supersolution: the reverse.  Returns (ok, worst slack, worst node).
    """
    r = residual_P(u, P)
    g = P.grid
    s = 1.0 if kind == "sub" else -1.0
    slack = np.empty(g.size)
    slack[g.interior] = s * r[g.interior]
    slack[g.boundary] = -s * np.asarray(u)[g.boundary]
    k = int(np.argmin(slack))
    return bool(slack[k] >= -tol), float(slack[k]), k


def comparison_check(alpha, beta, P: ProblemSpec, tol: float = 1e-8) -> ComparisonVerdict:
    """Verify the discrete comparison principle on a sub/supersolution pair."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    ok_a, sa, na = sign_check(alpha, P, "sub", tol)
    ok_b, sb, nb = sign_check(beta, P, "super", tol)
    if not ok_a or not ok_b:
        parts = []
        if not ok_a:
            parts.append(f"alpha is not a subsolution (slack {sa:.3g} at node {na})")
        if not ok_b:
            parts.append(f"beta is not a supersolution (slack {sb:.3g} at node {nb})")
        return ComparisonVerdict(False, False, float("nan"), na if not ok_a else nb, "; ".join(parts))
    gap = beta - alpha
    k = int(np.argmin(gap))
    passed = bool(gap[k] >= -tol)
    msg = "alpha <= beta" if passed else f"alpha exceeds beta by {-gap[k]:.3g} at node {k}"
    return ComparisonVerdict(passed, True, float(gap[k]), k, msg)
