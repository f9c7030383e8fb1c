"""Empirical a priori bounds along branches, the ABP margin and the transformed lower-bound problem.

All constants reported here are measured on the discrete data; none is
asserted to equal a theoretical constant.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .continuation import Branch
from .errors import ValidationError
from .mesh import Grid
from .operators import (
    Ellipticity,
    MatrixField,
    ProblemSpec,
    extremal_L,
    quadratic_term,
)

logger = logging.getLogger(__name__)


@dataclass
class BoundReport:
    """Suprema of ``|u^-|`` and ``|u^+|`` over the branch points in a parameter window.

    ``refined_*`` hold the same quantities for the refined branch when one is
    supplied, and ``stability_*`` the relative change between resolutions.
    ``capped`` marks windows where the branch stopped at its norm cap, so no
    finite supremum is claimed there.
    """

    window: tuple[float, float]
    sup_neg: float
    sup_pos: float
    sup_abs: float
    covered: bool
    capped: bool = False
    degenerate: bool = False
    refined_sup_neg: float = np.nan
    refined_sup_pos: float = np.nan
    refined_sup_abs: float = np.nan
    stability_neg: float = np.nan
    stability_pos: float = np.nan
    stability_abs: float = np.nan
    table: list[tuple[float, float, float]] = field(default_factory=list)


def _window_stats(branch: Branch, lo: float, hi: float):
    rows = [(p.param, max(0.0, -p.min_u), max(0.0, p.max_u)) for p in branch.points
            if lo <= p.param <= hi]
    params = branch.params
    covered = bool(params.size and params.min() <= lo + 1e-12 and params.max() >= hi - 1e-12)
    last = branch.points[-1]
    capped = branch.termination == "norm-cap" and lo <= last.param <= hi
    if rows:
        neg = max(r[1] for r in rows)
        pos = max(r[2] for r in rows)
    else:
        neg = pos = np.nan
    return rows, neg, pos, covered, capped


def _ratio(a: float, b: float) -> float:
    if not (np.isfinite(a) and np.isfinite(b)):
        return np.nan
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _report(branch: Branch, lo: float, hi: float, refined: Branch | None) -> BoundReport:
    rows, neg, pos, covered, capped = _window_stats(branch, lo, hi)
    rep = BoundReport((lo, hi), neg, pos, max(neg, pos) if rows else np.nan, covered, capped,
                      degenerate=lo == hi, table=rows)
    if capped:
        rep.sup_abs = np.inf
    if refined is not None:
        _, rneg, rpos, rcov, rcap = _window_stats(refined, lo, hi)
        rep.refined_sup_neg, rep.refined_sup_pos = rneg, rpos
        rep.refined_sup_abs = np.inf if rcap else max(rneg, rpos)
        rep.covered = rep.covered and rcov
        rep.capped = rep.capped or rcap
        rep.stability_neg = _ratio(neg, rneg)
        rep.stability_pos = _ratio(pos, rpos)
        rep.stability_abs = _ratio(rep.sup_abs, rep.refined_sup_abs)
    if not rep.covered:
        logger.info("bound window [%g, %g] only partially covered by the branch", lo, hi)
    return rep


def verify_lower_bound(branch: Branch, Lambda2: float, refined: Branch | None = None) -> BoundReport:
    """Supremum of ``|u^-|`` over ``lam`` in ``[0, Lambda2]`` (and its refinement drift)."""
    if not Lambda2 >= 0:
        raise ValidationError("Lambda2 must be nonnegative")
    return _report(branch, 0.0, float(Lambda2), refined)


def verify_upper_bound(branch: Branch, Lambda1: float, Lambda2: float,
                       refined: Branch | None = None) -> BoundReport:
    """Supremum of ``|u|`` over ``lam`` in ``[Lambda1, Lambda2]``."""
    if Lambda1 > Lambda2 or Lambda1 < 0:
        raise ValidationError("need 0 <= Lambda1 <= Lambda2")
    return _report(branch, float(Lambda1), float(Lambda2), refined)


@dataclass(frozen=True)
class ABPReport:
    """Interior excess of the maximum over the boundary maximum against ``|f^-|_p``."""

    gated: bool
    margin: float
    fneg_norm: float
    ratio: float
    violation: bool
    subsolution_slack: float
    message: str


def lp_norm(grid: Grid, values, p: float) -> float:
    """Discrete ``L^p`` norm with quadrature weight ``h^dim``."""
    v = np.abs(np.asarray(values, dtype=float))
    return float((grid.cell_volume * np.sum(v**p)) ** (1.0 / p))


def abp_check(u, f, grid: Grid, E: Ellipticity, b: float = 0.0, mu: float = 0.0,
              tol: float = 1e-8, p: float | None = None, C: float | None = None,
              scheme: str = "fitted") -> ABPReport:
    """Compare ``max u - max_boundary u`` with ``|f^-|_p`` for a subsolution of
    ``L+[u] + mu |Du|^2 >= f``.

    ``f`` is given at interior nodes or on the whole grid.  A violation is
    flagged when the margin is positive while ``f^- = 0``, or when the ratio
    exceeds ``C`` (if given).
    """
    u = np.asarray(u, dtype=float)
    f = np.asarray(f, dtype=float)
    fi = f[grid.interior] if f.shape == (grid.size,) else np.broadcast_to(f, (grid.n_interior,))
    lhs = extremal_L(grid, u, +1, E, b)
    if mu > 0:
        q, _ = quadratic_term(grid, MatrixField.scalar(mu, grid.dim), u, E.lam, scheme)
        lhs = lhs + q
    slack = float(np.min(lhs - fi))
    if slack < -tol:
        return ABPReport(False, np.nan, np.nan, np.nan, False, slack,
                         f"not a subsolution: slack {slack:.3g}")
    p = 2 * grid.dim + 1 if p is None else p
    margin = float(np.max(u) - np.max(u[grid.boundary]))
    fneg = lp_norm(grid, np.clip(-fi, 0, None), p)
    if fneg > 0:
        ratio = max(margin, 0.0) / fneg
    else:
        ratio = 0.0 if margin <= tol else np.inf
    violation = (fneg == 0 and margin > tol) or (C is not None and ratio > C)
    return ABPReport(True, margin, fneg, ratio, bool(violation), slack,
                     "violation" if violation else "ok")


@dataclass(frozen=True)
class QLambdaReport:
    """Transformed negative part ``w`` and the residual of its inequality (should be ``<= 0``)."""

    w: np.ndarray
    residual: np.ndarray
    max_residual: float
    saturated: bool
    m: float


def q_lambda_residual(u, P: ProblemSpec) -> QLambdaReport:
    """Residual of ``-(L+[w] - m h^- w) - h^- - (lam/m) c |ln(1 - m w)| (1 - m w)``.

    Here ``w = (1 - exp(-m u^-))/m`` with ``m = mu1 / Lam_P`` and ``L+`` uses
    the operator's ellipticity and drift bound.  ``saturated`` flags ``w``
    within ``1e-12`` of ``1/m``.
    """
    u = np.asarray(u, dtype=float)
    g = P.grid
    E = P.operator.ellipticity
    m = P.M.mu1 / E.Lam
    uneg = np.clip(-u, 0, None)
    w = -np.expm1(-m * uneg) / m
    saturated = bool(np.any(w >= 1.0 / m - 1e-12))
    idx = g.interior
    hneg = np.clip(-P.h[idx], 0, None)
    one = np.clip(1.0 - m * w[idx], np.finfo(float).tiny, None)
    L1 = extremal_L(g, w, +1, E, P.operator.b) - m * hneg * w[idx]
    rhs = hneg + (P.lam / m) * P.c[idx] * np.abs(np.log(one)) * one
    r = -L1 - rhs
    return QLambdaReport(w, r, float(np.max(r)), saturated, m)


def pure_forcing(u, P: ProblemSpec) -> np.ndarray:
    """``f = -(lam c u + h)`` at interior nodes: the forcing seen by ``F[u] + <M Du, Du>``."""
    idx = P.grid.interior
    return -(P.lam * P.c[idx] * np.asarray(u)[idx] + P.h[idx])


def empirical_lower_constant(branches, Lambda2: float) -> float:
    """Largest ``|u^-|`` seen on the given branches for ``lam`` in ``[0, Lambda2]``."""
    vals = [max(0.0, -p.min_u) for br in branches for p in br.points if 0 <= p.param <= Lambda2]
    return max(vals) if vals else 0.0


__all__ = [
    "ABPReport",
    "BoundReport",
    "QLambdaReport",
    "abp_check",
    "empirical_lower_constant",
    "lp_norm",
    "pure_forcing",
    "q_lambda_residual",
    "verify_lower_bound",
    "verify_upper_bound",
]
