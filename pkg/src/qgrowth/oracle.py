"""Reference solutions that do not share kernels with the primary solver.

* the explicit radial family ``u_k = ln((r^(2-n) - k)/(1 - k))``, for which
  ``exp(u_k)`` is harmonic, so ``Laplacian u_k + |Du_k|^2 = 0``;
* manufactured forcings;
* a Newton solver for the exponentially transformed semilinear equation,
  assembled from its own tridiagonal / Kronecker Laplacians on a finer grid,
  together with a Moore-Spence solver for its turning point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import ConvergenceError, DomainError, UnsupportedReductionError, ValidationError
from .mesh import Grid
from .operators import ProblemSpec, apply_F, quadratic_term
from .transforms import SemilinearProblem

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Explicit radial family


def radial_family_r(k: float, n: int, r) -> np.ndarray:
    """``u_k`` as a function of the radius."""
    if not 0 <= k < 1:
        raise ValidationError(f"k must lie in [0, 1), got {k}")
    if int(n) != n or n <= 2:
        raise ValidationError(f"dimension must be an integer > 2, got {n}")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("radial family is singular at the origin")
    return np.log((r ** (2.0 - n) - k) / (1.0 - k))


def radial_family(k: float, n: int, x) -> float | np.ndarray:
    """``u_k(x)`` for a point (or stack of points) with ``0 < |x| <= 1``."""
    x = np.asarray(x, dtype=float)
    r = np.abs(x) if x.ndim == 0 else np.linalg.norm(x, axis=-1)
    out = radial_family_r(k, n, r)
    return float(out) if np.ndim(out) == 0 else out


def radial_residual(k: float, n: int, cells: int, r0: float = 0.1, r1: float = 1.0) -> float:
    """Max of ``|u'' + (n-1)/r u' + (u')^2|`` with centered differences on ``cells`` cells."""
    r = np.linspace(r0, r1, cells + 1)
    dr = (r1 - r0) / cells
    u = radial_family_r(k, n, r)
    d1 = (u[2:] - u[:-2]) / (2 * dr)
    d2 = (u[2:] - 2 * u[1:-1] + u[:-2]) / dr**2
    return float(np.max(np.abs(d2 + (n - 1) / r[1:-1] * d1 + d1**2)))


def observed_orders(errors) -> np.ndarray:
    """``log2`` ratios of successive errors under halving."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


# ---------------------------------------------------------------------------
# Manufactured problems


def manufactured(u_exact, P: ProblemSpec) -> np.ndarray:
    """Forcing ``h`` making ``u_exact`` an exact discrete solution of ``P``.

    ``h = -F[u] - lam c u - <M Du, Du>`` at interior nodes; boundary entries are
    zero and never enter the residual.
    """
    g = P.grid
    u = np.asarray(u_exact, dtype=float)
    if np.max(np.abs(u[g.boundary]), initial=0.0) > 1e-12:
        raise ValidationError("manufactured solution must vanish on the boundary")
    q, _ = quadratic_term(g, P.M, u, P.lam_P, P.quadratic_scheme)
    h = np.zeros(g.size)
    h[g.interior] = -apply_F(P.operator, g, u) - P.lam * P.c[g.interior] * u[g.interior] - q
    return h


# ---------------------------------------------------------------------------
# Semilinear reference solver


@dataclass(frozen=True, eq=False)
class _FineGrid:
    coords: np.ndarray  # (N, dim) interior node coordinates
    lap: sp.csr_matrix  # Dirichlet Laplacian on interior nodes
    grad: list  # centered first differences per axis
    take: np.ndarray  # fine interior index of every coarse interior node
    h: float


def _fine_grid(grid: Grid, refine: int) -> _FineGrid:
    if int(refine) != refine or refine < 1:
        raise ValidationError("refinement factor must be a positive integer")
    refine = int(refine)
    if grid.kind == "interval":
        a, b = float(grid.coords[0, 0]), float(grid.coords[-1, 0])
        n = (grid.size - 1) * refine
        h = (b - a) / n
        x = a + h * np.arange(1, n)
        m = n - 1
        lap = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2
        grad = [sp.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1]) / (2 * h)]
        take = refine * grid.tensor_index[grid.interior, 0] - 1
        return _FineGrid(x[:, None], sp.csr_matrix(lap), [sp.csr_matrix(grad[0])], take, h)
    if grid.kind == "rectangle":
        x0, y0 = grid.coords.min(axis=0)
        x1, y1 = grid.coords.max(axis=0)
        nx, ny = [(s - 1) * refine for s in grid.shape]
        hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
        if not np.isclose(hx, hy, rtol=1e-12):
            raise UnsupportedReductionError("reference solver needs equal spacing on both axes")
        mx, my = nx - 1, ny - 1

        def second(m, h):
            return sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h**2

        def first(m, h):
            return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1]) / (2 * h)

        Ix, Iy = sp.identity(mx), sp.identity(my)
        lap = sp.kron(second(mx, hx), Iy) + sp.kron(Ix, second(my, hy))
        grad = [sp.csr_matrix(sp.kron(first(mx, hx), Iy)), sp.csr_matrix(sp.kron(Ix, first(my, hy)))]
        X, Y = np.meshgrid(x0 + hx * np.arange(1, nx), y0 + hy * np.arange(1, ny), indexing="ij")
        ti = grid.tensor_index[grid.interior]
        take = (refine * ti[:, 0] - 1) * my + (refine * ti[:, 1] - 1)
        return _FineGrid(np.column_stack([X.ravel(), Y.ravel()]), sp.csr_matrix(lap), grad, take, hx)
    raise UnsupportedReductionError(f"reference solver does not support {grid.kind} grids")


def _resample(fg: _FineGrid, grid: Grid, values: np.ndarray, fn) -> np.ndarray:
    if fn is not None:
        cols = [fg.coords[:, k] for k in range(fg.coords.shape[1])]
        out = np.asarray(fn(*cols), dtype=float)
        return np.broadcast_to(out, (fg.coords.shape[0],)).copy()
    if grid.kind == "interval":
        return np.interp(fg.coords[:, 0], grid.coords[:, 0], values)
    axes = [np.unique(grid.coords[:, k]) for k in range(2)]
    table = np.empty(grid.shape)
    table[tuple(grid.tensor_index.T)] = values
    return RegularGridInterpolator(axes, table)(fg.coords)


@dataclass
class OracleSolution:
    """Reference solution on the fine grid and its restriction to the coarse interior."""

    v: np.ndarray
    u_fine: np.ndarray
    u: np.ndarray  # full coarse grid function (zero on the boundary)
    lam: float
    iterations: int
    residual: float
    refine: int


class _Semilinear:
    """``G(v) = a0 Lap v + drift . Dv + g(v)`` on the fine interior."""

    def __init__(self, red: SemilinearProblem, refine: int):
        self.red = red
        self.fg = _fine_grid(red.grid, refine)
        self.c = _resample(self.fg, red.grid, red.c, red.c_fn)
        self.h = _resample(self.fg, red.grid, red.h, red.h_fn)
        A = red.a0 * self.fg.lap
        if red.drift is not None:
            dr = np.broadcast_to(np.asarray(red.drift, dtype=float).reshape(-1), (red.grid.dim,))
            for k, D in enumerate(self.fg.grad):
                A = A + dr[k] * D
        self.A = sp.csr_matrix(A)
        self.norm_A = float(abs(self.A).sum(axis=1).max())
        self.m = red.m

    def parts(self, v, lam):
        s = 1.0 + self.m * v
        if np.any(s <= 0):
            raise DomainError("iterate left the region 1 + m v > 0")
        ls = np.log(s)
        G = self.A @ v + (lam / self.m) * self.c * s * ls + self.h * s
        dg = lam * self.c * (ls + 1.0) + self.m * self.h
        d2g = lam * self.m * self.c / s
        dlam = self.c * s * ls / self.m
        dvlam = self.c * (ls + 1.0)
        return G, dg, d2g, dlam, dvlam

    def floor(self, v, lam) -> float:
        """Round-off level of ``G``: the Laplacian amplifies ``eps |v|`` by ``|A|``."""
        s = 1.0 + self.m * v
        size = self.norm_A * np.max(np.abs(v)) + np.max(np.abs(self.h * s)) \
            + abs(lam) * np.max(np.abs(self.c * s * np.log(s))) / self.m
        return 64 * np.finfo(float).eps * float(size)

    def newton(self, v, lam, tol, max_iter=60):
        for it in range(1, max_iter + 1):
            G, dg, *_ = self.parts(v, lam)
            r = float(np.max(np.abs(G)))
            if r <= max(tol, self.floor(v, lam)):
                return v, it, r
            dv = spla.spsolve(sp.csc_matrix(self.A + sp.diags(dg)), -G)
            if np.max(np.abs(dv)) <= 1e-14 * max(1.0, np.max(np.abs(v))):
                return v + dv, it, r
            t = 1.0
            while True:
                trial = v + t * dv
                try:
                    Gt = self.parts(trial, lam)[0]
                    if np.linalg.norm(Gt) <= (1 - 1e-4 * t) * np.linalg.norm(G):
                        break
                except DomainError:
                    pass
                t *= 0.5
                if t < 2.0**-30:
                    raise ConvergenceError(f"reference Newton line search failed at lam={lam:g}")
            v = trial
        raise ConvergenceError(f"reference Newton did not converge at lam={lam:g} (residual {r:.3g})")

    def to_u(self, v):
        return np.log1p(self.m * v) / self.m

    def restrict(self, u_fine):
        g = self.red.grid
        out = np.zeros(g.size)
        out[g.interior] = u_fine[self.fg.take]
        return out


def semilinear_solve(red: SemilinearProblem, refine: int = 4, tol: float = 1e-11, lam=None,
                     seed=None) -> OracleSolution:
    """Damped Newton for the reduced equation on a grid ``refine`` times finer.

    ``seed`` is an optional coarse grid function in ``u``; it is interpolated,
    transformed to ``v`` and used as the starting iterate (default ``v = 0``).
    """
    if refine < 4:
        logger.warning("reference solve at refinement %d is below the recommended 4", refine)
    S = _Semilinear(red, refine)
    lam = red.lam if lam is None else float(lam)
    if seed is None:
        v0 = np.zeros(S.fg.coords.shape[0])
    else:
        us = _resample(S.fg, red.grid, np.asarray(seed, dtype=float), None)
        v0 = np.expm1(S.m * us) / S.m
    v, its, res = S.newton(v0, lam, tol)
    u_f = S.to_u(v)
    return OracleSolution(v, u_f, S.restrict(u_f), lam, its, res, int(refine))


def richardson(coarse, fine, order: float = 2.0, ratio: float = 2.0):
    """Extrapolate two approximations whose error scales like ``spacing^order``."""
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    return fine + (fine - coarse) / (ratio**order - 1.0)


def extrapolated_reference(red: SemilinearProblem, refine: int = 4, tol: float = 1e-11,
                           seed=None) -> np.ndarray:
    """Richardson combination of reference solves at ``refine`` and ``2 refine``."""
    a = semilinear_solve(red, refine, tol, seed=seed)
    b = semilinear_solve(red, 2 * refine, tol, seed=a.u)
    return richardson(a.u, b.u)


# ---------------------------------------------------------------------------
# Turning point of the reduced equation


@dataclass(frozen=True)
class OracleFold:
    lam: float
    v: np.ndarray
    null: np.ndarray
    iterations: int
    residual: float
    refine: int


def oracle_fold(red: SemilinearProblem, refine: int = 4, lam_step: float = 0.25,
                tol: float = 1e-10, max_iter: int = 50) -> OracleFold:
    """Turning point of ``lam -> v`` by natural stepping, then a Moore-Spence solve.

    Stepping in ``lam`` from ``red.lam`` halves the step whenever Newton fails
    and stops near the fold; the extended system
    ``G = 0, G_v phi = 0, l . phi = 1`` is then solved by Newton.
    """
    S = _Semilinear(red, refine)
    N = S.fg.coords.shape[0]
    lam, step = red.lam, lam_step
    v, _, _ = S.newton(np.zeros(N), lam, tol)
    while step > 1e-3:
        try:
            v_new, _, _ = S.newton(v, lam + step, tol)
        except (ConvergenceError, DomainError):
            step *= 0.5
            continue
        v, lam = v_new, lam + step
    # approximate null vector from a few inverse iterations near the fold
    J = sp.csc_matrix(S.A + sp.diags(S.parts(v, lam)[1]))
    phi = np.ones(N)
    lu = spla.splu(J)
    for _ in range(20):
        phi = lu.solve(phi)
        phi /= np.max(np.abs(phi))
    ell = phi / (phi @ phi)
    x = np.concatenate([v, phi, [lam]])
    res = np.inf
    for it in range(1, max_iter + 1):
        v, phi, lam = x[:N], x[N:2 * N], x[-1]
        G, dg, d2g, dl, dvl = S.parts(v, lam)
        Jv = S.A + sp.diags(dg)
        F = np.concatenate([G, Jv @ phi, [ell @ phi - 1.0]])
        res = float(np.max(np.abs(F)))
        floor = max(S.floor(v, lam), 64 * np.finfo(float).eps * S.norm_A * np.max(np.abs(phi)))
        if res <= max(tol, floor):
            return OracleFold(float(lam), v, phi, it, res, int(refine))
        K = sp.bmat([[Jv, None, sp.csc_matrix(dl[:, None])],
                     [sp.diags(d2g * phi), Jv, sp.csc_matrix((dvl * phi)[:, None])],
                     [None, sp.csr_matrix(ell[None, :]), None]], format="csc")
        x = x + spla.spsolve(K, -F)
    raise ConvergenceError(f"Moore-Spence solve did not converge (residual {res:.3g})")


__all__ = [
    "OracleFold",
    "OracleSolution",
    "extrapolated_reference",
    "manufactured",
    "observed_orders",
    "oracle_fold",
    "radial_family",
    "radial_family_r",
    "radial_residual",
    "richardson",
    "semilinear_solve",
]
