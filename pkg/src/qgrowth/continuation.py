"""Pseudo-arclength continuation of solution branches, fold location and the k-homotopy.

A branch is a curve of pairs ``(u, p)`` with ``G(u, p) = 0``, where ``p`` is
``lam`` (the coefficient of ``c u``), ``k`` (forcing ``h + k c~``) or a homotopy
parameter between two forcings.  Steps use a secant predictor and a Newton
corrector on the bordered system

    [ J        G_p ] [du]   [-G]
    [ w t_u^T  t_p ] [dp] = [-(w t_u.(u - u_pred) + t_p (p - p_pred))]

with ``w`` the quadrature weight, so the corrector moves orthogonally to the
current tangent and passes folds.  Distances between points use the combined
norm ``sqrt(w |du|^2 + dp^2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import EigenPair
from .errors import ConvergenceError, SaturationError, ValidationError
from .fixedpoint import solve_full
from .operators import ProblemSpec, effective_tol, problem_linearization, residual_P

logger = logging.getLogger(__name__)

TERMINATIONS = ("range-exhausted", "norm-cap", "step-failure")


# ---------------------------------------------------------------------------
# Parameter families


@dataclass(frozen=True, eq=False)
class Family:
    """One-parameter family of problems: ``lam`` itself, or ``h = h0 + p * dh``."""

    base: ProblemSpec
    kind: str
    h0: np.ndarray | None = None
    dh: np.ndarray | None = None

    def problem(self, p: float) -> ProblemSpec:
        if self.kind == "lambda":
            return self.base.with_lam(p)
        return self.base.with_h(self.h0 + p * self.dh)

    def dparam(self, P: ProblemSpec, u: np.ndarray) -> np.ndarray:
        g = P.grid
        if self.kind == "lambda":
            return P.c[g.interior] * u[g.interior]
        return self.dh[g.interior]

    @classmethod
    def in_lambda(cls, P: ProblemSpec) -> "Family":
        return cls(P, "lambda")

    @classmethod
    def in_forcing(cls, P: ProblemSpec, direction, kind: str = "k", h0=None) -> "Family":
        h0 = P.h.copy() if h0 is None else np.asarray(h0, dtype=float)
        return cls(P, kind, h0, np.broadcast_to(np.asarray(direction, dtype=float), h0.shape).copy())


# ---------------------------------------------------------------------------
# Branch data


@dataclass
class BranchPoint:
    param: float
    solution: np.ndarray
    sup_norm: float
    max_u: float
    min_u: float
    probe_value: float
    arclength: float
    tangent_sign: int
    residual: float
    fold_flag: bool = False
    step: float = 0.0


@dataclass
class Branch:
    """Ordered branch points with fold annotations and the reason tracing stopped."""

    parameter_kind: str
    points: list[BranchPoint]
    termination: str
    family: Family
    probe_node: int
    ds: float
    tol: float
    folds: list[int] = field(default_factory=list)
    message: str = ""

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    @property
    def sup_norms(self) -> np.ndarray:
        return np.array([p.sup_norm for p in self.points])

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Caps:
    """Step-size and stopping limits of a trace."""

    norm_cap: float = 1e3
    ds_min: float = 1e-7
    ds_max: float | None = None
    max_points: int = 5000
    growth: float = 1.3
    max_corrector: int = 15


def _point(P: ProblemSpec, u, p, s, tsign, probe, resid, step) -> BranchPoint:
    return BranchPoint(float(p), u.copy(), float(np.max(np.abs(u))), float(np.max(u)),
                       float(np.min(u)), float(u[probe]), float(s), int(tsign), float(resid),
                       False, float(step))


class _Tracer:
    def __init__(self, family: Family, tol: float, caps: Caps):
        self.family = family
        self.tol = tol
        self.caps = caps
        self.grid = family.base.grid
        self.idx = self.grid.interior
        self.w = self.grid.cell_volume

    def system(self, u, p):
        P = self.family.problem(p)
        lin = problem_linearization(P, u)
        return lin, self.family.dparam(P, u), P

    def norm(self, du, dp) -> float:
        return float(np.sqrt(self.w * du @ du + dp * dp))

    def natural_solve(self, u_seed, p):
        rep = solve_full(self.family.problem(p), u_seed, self.tol)
        return rep

    def initial_tangent(self, u, p, direction: int):
        lin, gp, _ = self.system(u, p)
        tu = spla.spsolve(lin.jac, -gp)
        t = np.concatenate([tu, [1.0]]) * direction
        return t / self.norm(t[:-1], t[-1])

    def correct(self, u, p, t, ds):
        """Newton corrector from the predictor ``(u, p) + ds t``; returns (u, p, its, resid) or None."""
        idx = self.idx
        tu, tp = t[:-1], t[-1]
        x = u.copy()
        x[idx] = u[idx] + ds * tu
        q = p + ds * tp
        upred, ppred = x[idx].copy(), q
        border = sp.csr_matrix(self.w * tu[None, :])
        corner = sp.csr_matrix([[tp]])
        first = None
        for it in range(1, self.caps.max_corrector + 1):
            try:
                lin, gp, _ = self.system(x, q)
            except SaturationError:
                return None
            r = lin.residual
            con = self.w * tu @ (x[idx] - upred) + tp * (q - ppred)
            rn = float(np.max(np.abs(r)))
            if first is None:
                first = rn
            elif not np.isfinite(rn) or rn > 1e3 * max(first, 1.0):
                return None
            if rn <= effective_tol(self.tol, lin.scale) and abs(con) <= 1e-10 * max(1.0, ds):
                return x, q, it, rn
            A = sp.bmat([[lin.jac, sp.csc_matrix(gp[:, None])], [border, corner]], format="csc")
            try:
                delta = spla.spsolve(A, -np.concatenate([r, [con]]))
            except RuntimeError:
                return None
            if not np.all(np.isfinite(delta)):
                return None
            x = x.copy()
            x[idx] += delta[:-1]
            q = q + delta[-1]
        return None


def _trace(family: Family, u0, p0: float, p_range, ds: float, caps: Caps, direction: int,
           tol: float, probe: int | None) -> Branch:
    grid = family.base.grid
    probe = grid.centroid_node() if probe is None else int(probe)
    lo, hi = min(p_range), max(p_range)
    if not lo <= p0 <= hi:
        raise ValidationError(f"start parameter {p0} outside range [{lo}, {hi}]")
    if not ds > 0:
        raise ValidationError("arclength step must be positive")
    ds_max = caps.ds_max if caps.ds_max is not None else 10.0 * ds
    tr = _Tracer(family, tol, caps)
    u = np.asarray(u0, dtype=float).copy()
    P0 = family.problem(p0)
    res0 = float(np.max(np.abs(residual_P(u, P0))))
    t = tr.initial_tangent(u, p0, direction)
    pts = [_point(P0, u, p0, 0.0, np.sign(t[-1]), probe, res0, 0.0)]
    folds: list[int] = []
    p, s, h = p0, 0.0, ds
    termination, message = "step-failure", "point budget exhausted"
    idx = grid.interior
    while len(pts) < caps.max_points:
        out = tr.correct(u, p, t, h)
        if out is not None:
            unew, pnew, its, rn = out
            step = tr.norm(unew[idx] - u[idx], pnew - p)
            if step > 2.0 * h or step == 0.0:
                out = None
        if out is None:
            h *= 0.5
            if h < caps.ds_min:
                termination, message = "step-failure", f"corrector failed at {family.kind}={p:.6g}"
                break
            continue
        tnew = np.concatenate([unew[idx] - u[idx], [pnew - p]]) / step
        crossed = pnew < lo or pnew > hi
        if crossed:
            # land exactly on the range end, seeded by linear interpolation
            end = lo if pnew < lo else hi
            theta = (end - p) / (pnew - p)
            seed = u + theta * (unew - u)
            rep = tr.natural_solve(seed, end)
            if rep.converged:
                d = tr.norm(rep.solution[idx] - u[idx], end - p)
                s += d
                pt = _point(family.problem(end), rep.solution, end, s, np.sign(tnew[-1]), probe,
                            rep.residual, d)
                if np.sign(tnew[-1]) != np.sign(t[-1]):
                    pt.fold_flag = True
                    folds.append(len(pts))
                pts.append(pt)
                termination, message = "range-exhausted", f"reached {family.kind}={end:.6g}"
            else:
                termination, message = "range-exhausted", \
                    f"left the range at {family.kind}={pnew:.6g}; end-point solve failed ({rep.reason})"
            break
        s += step
        pt = _point(family.problem(pnew), unew, pnew, s, np.sign(tnew[-1]), probe, rn, step)
        if np.sign(tnew[-1]) != np.sign(t[-1]) and tnew[-1] != 0:
            pt.fold_flag = True
            folds.append(len(pts))
        pts.append(pt)
        u, p, t = unew, pnew, tnew
        if pt.sup_norm > caps.norm_cap:
            termination, message = "norm-cap", f"sup norm {pt.sup_norm:.4g} exceeds cap {caps.norm_cap:g}"
            break
        if its <= 4:
            h = min(h * caps.growth, ds_max)
        elif its >= 8:
            h = max(h * 0.7, caps.ds_min)
    logger.info("trace in %s: %d points, %s (%s)", family.kind, len(pts), termination, message)
    return Branch(family.kind, pts, termination, family, probe, ds, tol, folds, message)


def trace_branch(P0: ProblemSpec, param_range, ds: float = 0.05, caps: Caps | None = None,
                 seed=None, start: float | None = None, direction: int = 1, tol: float = 1e-8,
                 probe: int | None = None, family: Family | None = None) -> Branch:
    """Trace a branch from the solution at ``start`` (default: the range start).

    ``family`` defaults to continuation in ``lam``.  The initial solution is
    obtained with :func:`solve_full` from ``seed``.
    """
    caps = caps or Caps()
    family = family or Family.in_lambda(P0)
    p0 = float(param_range[0] if start is None else start)
    rep = solve_full(family.problem(p0), seed, tol)
    if not rep.converged:
        raise ConvergenceError(f"no initial solution at {family.kind}={p0} ({rep.reason})", rep)
    return _trace(family, rep.solution, p0, param_range, ds, caps, direction, tol, probe)


@dataclass(frozen=True)
class FoldEstimate:
    """Parameter value of a turning point and a bracket built from sampled points."""

    present: bool
    value: float = np.nan
    bracket: tuple[float, float] = (np.nan, np.nan)
    index: int = -1
    kind: str = ""


def detect_fold(branch: Branch, which: int = 0) -> FoldEstimate:
    """Locate the ``which``-th fold by a parabola through three arclength samples.

    The bracket spans the two sampled parameters adjacent to the sign change
    and the parabola vertex.
    """
    if len(branch.folds) <= which:
        return FoldEstimate(False)
    i = branch.folds[which]
    pts = branch.points
    j = [k for k in (i - 2, i - 1, i, i + 1) if 0 <= k < len(pts)]
    # three points: the last before the sign change, and its neighbors
    cand = [k for k in (i - 2, i - 1, i) if k >= 0]
    if len(cand) < 3:
        cand = j[:3]
    s = np.array([pts[k].arclength for k in cand])
    p = np.array([pts[k].param for k in cand])
    a, b, _ = np.polyfit(s, p, 2)
    if a == 0:
        value = float(np.max(p))
    else:
        sv = -b / (2 * a)
        value = float(np.polyval([a, b, _], sv))
    kind = "max" if a < 0 else "min"
    near = [pts[i - 1].param, pts[i].param]
    lo, hi = min(near + [value]), max(near + [value])
    return FoldEstimate(True, value, (lo, hi), i, kind)


def solutions_at(branch: Branch, values, tol: float | None = None, sheet: str = "all"):
    """Solve exactly at each parameter in ``values`` from interpolated branch seeds.

    Returns a list per value of ``(param, solution)`` pairs, one per crossing of
    the branch (so a fold yields two solutions for the same value).
    """
    tol = branch.tol if tol is None else tol
    out = []
    pts = branch.points
    for v in values:
        found = []
        for a, b in zip(pts[:-1], pts[1:]):
            if (a.param - v) * (b.param - v) <= 0 and a.param != b.param:
                th = (v - a.param) / (b.param - a.param)
                seed = a.solution + th * (b.solution - a.solution)
                rep = solve_full(branch.family.problem(v), seed, tol)
                if rep.converged and not any(np.max(np.abs(rep.solution - f)) < 1e-6 for f in found):
                    found.append(rep.solution)
        out.append(found)
    return out


class Reverification(NamedTuple):
    worst_residual: float
    worst_ratio: float  # residual / effective tolerance, maximized over points
    ok: bool


def reverify(branch: Branch, tol: float | None = None) -> Reverification:
    """Independent residual pass over all points.

    Each residual is judged against the effective tolerance of its own point,
    since the round-off floor grows with the magnitude of the solution.
    """
    tol = branch.tol if tol is None else tol
    worst, ratio = 0.0, 0.0
    for pt in branch.points:
        lin = problem_linearization(branch.family.problem(pt.param), pt.solution)
        r = float(np.max(np.abs(lin.residual)))
        worst = max(worst, r)
        ratio = max(ratio, r / effective_tol(tol, lin.scale))
    return Reverification(float(worst), float(ratio), bool(ratio <= 1.0))


# ---------------------------------------------------------------------------
# Auxiliary forcing and homotopies


def build_ctilde(c, h, Lambda2: float, C0: float, eigen: EigenPair, m: float) -> np.ndarray:
    """``c~ = (lambda1/m) c + h^- + Lambda2 C0 c``."""
    if not Lambda2 > 0 or C0 < 0 or not m > 0:
        raise ValidationError("build_ctilde needs Lambda2 > 0, C0 >= 0, m > 0")
    c = np.asarray(c, dtype=float)
    hneg = np.clip(-np.asarray(h, dtype=float), 0, None)
    return (eigen.lambda1 / m) * c + hneg + Lambda2 * C0 * c


def homotopy_in_k(P: ProblemSpec, lam: float, ctilde, k_range=(0.0, 1.0), ds: float = 0.02,
                  caps: Caps | None = None, seed=None, tol: float = 1e-8,
                  probe: int | None = None) -> Branch:
    """Branch of ``-F[u] = lam c u + <M Du, Du> + h + k c~`` in ``k`` from ``k = k_range[0]``."""
    if not lam > 0:
        raise ValidationError("k-homotopy needs lam > 0")
    Pl = P.with_lam(lam)
    fam = Family.in_forcing(Pl, ctilde, "k")
    return trace_branch(Pl, k_range, ds, caps, seed=seed, tol=tol, probe=probe, family=fam)


def forcing_homotopy(P: ProblemSpec, u_start, h_start, h_end, ds: float = 0.05,
                     caps: Caps | None = None, tol: float = 1e-8) -> Branch:
    """Deform the forcing from ``h_start`` (t = 0) to ``h_end`` (t = 1) along a branch."""
    h_start = np.asarray(h_start, dtype=float)
    fam = Family.in_forcing(P, np.asarray(h_end, dtype=float) - h_start, "t", h0=h_start)
    caps = caps or Caps(norm_cap=1e4)
    return _trace(fam, u_start, 0.0, (-np.inf, 1.0), ds, caps, 1, tol, None)


def upper_solution(P: ProblemSpec, lam: float, h_ref, ds: float = 0.05, tol: float = 1e-8,
                   lam_max: float = 1e3) -> np.ndarray:
    """Second solution at ``lam`` reached through a reference forcing with a fold.

    Traces the ``lam``-branch of the problem with forcing ``h_ref`` from its
    lower solution at ``lam`` around the fold back to ``lam`` on the upper
    sheet, then deforms the forcing into ``P.h`` at fixed ``lam``.
    """
    Pref = P.with_h(np.broadcast_to(np.asarray(h_ref, dtype=float), P.h.shape))
    br = trace_branch(Pref, (lam, lam_max), ds, Caps(norm_cap=1e4), start=lam, tol=tol)
    if not br.folds or br.termination != "range-exhausted" or br.points[-1].param != lam:
        raise ConvergenceError(f"reference branch did not return to lam={lam} ({br.message})")
    hom = forcing_homotopy(P.with_lam(lam), br.points[-1].solution, Pref.h, P.h, ds, tol=tol)
    last = hom.points[-1]
    if hom.termination != "range-exhausted" or last.param != 1.0:
        raise ConvergenceError(f"forcing homotopy did not reach the target forcing ({hom.message})")
    return last.solution
