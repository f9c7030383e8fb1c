"""Radial barrier for the logarithmic strong maximum principle, plus discrete SMP and Hopf checks.

The barrier on the annulus ``R/2 < |x - x0| < R`` is

    v(x) = eps (|x - x0|^-alpha - R^-alpha),   eps = mu ((R/2)^-alpha - R^-alpha)^-1,

so ``v = mu`` on the inner sphere and ``v = 0`` on the outer one.  It must be
a strict subsolution of ``M^-(D^2v) - gamma |Dv| - d v > a v |ln v|``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .calculus import radial_hessian_spectrum
from .errors import ConfigurationError, DomainError, ValidationError
from .mesh import Grid
from .operators import Ellipticity, extremal_L

logger = logging.getLogger(__name__)

DELTA = math.exp(-1.0)  # s |ln s| increases exactly on (0, 1/e)
MIN_NODES_ACROSS = 8


def log_absorption(s, a: float) -> np.ndarray:
    """``f(s) = a s |ln s|`` extended by ``f(0) = 0``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = a * s[pos] * np.abs(np.log(s[pos]))
    return out


def vazquez_C0(R: float, mu: float, a: float, m0: float) -> float:
    """``a (|ln mu| + 2|ln R| + ln 2 + |ln(R/2)|) + m0``."""
    return a * (abs(math.log(mu)) + 2 * abs(math.log(R)) + math.log(2.0) + abs(math.log(R / 2))) + m0


def _alpha_lhs(alpha: float, R: float, lam_P: float, Lam_P: float, gamma: float, d: float,
               n: int, printed: bool) -> float:
    # M^- of the radial Hessian: phi'' > 0 weighted by lam_P, the n-1 angular
    # eigenvalues phi'/r < 0 weighted by Lam_P
    angular = (n - 1) * Lam_P if printed else -(n - 1) * Lam_P
    return (alpha * (lam_P * (alpha + 1) + angular - gamma * R) - d * R * R) / (R * R)


def vazquez_alpha(R: float, lam_P: float, Lam_P: float, gamma: float, d: float, a: float,
                  mu: float, m0: float | None = None, n: int = 2, max_alpha: int = 10**6,
                  printed: bool = False) -> int:
    """Smallest integer ``alpha >= 2`` with ``lhs(alpha) > C0 alpha``.

    ``lhs`` is the lower bound of ``M^-(D^2v) - gamma|Dv| - dv`` divided by
    ``eps |x - x0|^-alpha``.  By default the angular eigenvalues enter with
    their actual negative sign; ``printed=True`` uses ``+(n-1) Lam_P`` instead,
    which is weaker and need not yield a subsolution.  ``m0`` defaults to
    ``max_{[0,1]} a s|ln s| = a/e``.
    """
    if not (R > 0 and 0 < mu < 1):
        raise ValidationError("vazquez_alpha needs R > 0 and mu in (0, 1)")
    if not (0 < lam_P <= Lam_P) or gamma < 0 or d < 0 or a < 0:
        raise ValidationError("vazquez_alpha needs 0 < lam_P <= Lam_P and gamma, d, a >= 0")
    m0 = a / math.e if m0 is None else float(m0)
    if m0 < 0:
        raise ValidationError("m0 must be nonnegative")
    C0 = vazquez_C0(R, mu, a, m0)
    # lhs/alpha is increasing in alpha, so bisect on integers after doubling
    def ok(al: int) -> bool:
        return _alpha_lhs(al, R, lam_P, Lam_P, gamma, d, n, printed) > C0 * al

    hi = 2
    while not ok(hi):
        hi *= 2
        if hi > max_alpha:
            if ok(max_alpha):
                hi = max_alpha
                break
            raise ValidationError(f"no admissible alpha <= {max_alpha} (C0 = {C0:.4g})")
    lo = hi // 2
    if hi == 2:
        return 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return max(hi, 2)


@dataclass(frozen=True)
class BarrierSpec:
    """Center, radii and coefficients of the annular barrier."""

    center: tuple[float, ...]
    R: float
    mu: float
    alpha: float
    eps: float
    lam_P: float
    Lam_P: float
    gamma: float
    d: float
    a: float
    n: int

    @classmethod
    def design(cls, center, R: float, mu: float, lam_P: float, Lam_P: float, gamma: float = 0.0,
               d: float = 0.0, a: float = 0.0, n: int | None = None, m0: float | None = None,
               printed: bool = False) -> "BarrierSpec":
        """Choose ``alpha`` with :func:`vazquez_alpha` and the matching ``eps``.

        ``mu`` is clamped just below ``1/e`` where ``s |ln s|`` stops increasing.
        """
        center = tuple(float(c) for c in np.atleast_1d(center))
        n = len(center) if n is None else int(n)
        if mu >= DELTA:
            logger.warning("barrier inner value %g clamped below 1/e", mu)
            mu = DELTA * (1 - 1e-9)
        alpha = vazquez_alpha(R, lam_P, Lam_P, gamma, d, a, mu, m0, n, printed=printed)
        eps = mu / ((R / 2) ** -alpha - R ** -alpha)
        return cls(center, float(R), float(mu), float(alpha), float(eps), float(lam_P),
                   float(Lam_P), float(gamma), float(d), float(a), n)

    def profile(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("barrier profile is singular at r = 0")
        return self.eps * (r ** -self.alpha - self.R ** -self.alpha)

    def normal_derivative(self) -> float:
        """Inward normal derivative on the outer sphere, ``alpha eps R^(-alpha-1)``."""
        return self.alpha * self.eps * self.R ** (-self.alpha - 1)


def _radii(B: BarrierSpec, grid: Grid) -> np.ndarray:
    c = np.asarray(B.center, dtype=float)
    if c.size != grid.dim:
        raise ValidationError("barrier center dimension does not match the grid")
    return np.linalg.norm(grid.coords - c, axis=1)


def annulus_nodes(B: BarrierSpec, grid: Grid) -> np.ndarray:
    """Grid nodes with ``R/2 <= |x - x0| <= R``."""
    r = _radii(B, grid)
    tol = 1e-12 * B.R
    return np.flatnonzero((r >= B.R / 2 - tol) & (r <= B.R + tol))


def build_barrier(B: BarrierSpec, grid: Grid) -> np.ndarray:
    """Barrier values on annulus nodes; ``nan`` elsewhere."""
    if B.R / 2 < MIN_NODES_ACROSS * max(grid.spacing):
        raise ConfigurationError(
            f"annulus of width {B.R / 2:g} has fewer than {MIN_NODES_ACROSS} nodes across "
            f"at spacing {max(grid.spacing):g}", field="grid.n")
    r = _radii(B, grid)
    out = np.full(grid.size, np.nan)
    idx = annulus_nodes(B, grid)
    out[idx] = B.profile(r[idx])
    return out


@dataclass(frozen=True)
class BarrierMargins:
    """``L1^-[v] - f(v)`` sampled on the annulus; strictness means ``min_margin > 0``."""

    r: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    min_margin: float
    decreasing: bool
    convex: bool

    @property
    def strict(self) -> bool:
        return bool(self.min_margin > 0)


def barrier_margins(B: BarrierSpec, n_radial: int = 400) -> BarrierMargins:
    """Radial check with centered differences of the profile and the radial Hessian spectrum."""
    if n_radial < MIN_NODES_ACROSS:
        raise ConfigurationError(f"need at least {MIN_NODES_ACROSS} radial nodes", field="n_radial")
    dr = (B.R / 2) / n_radial
    r = B.R / 2 + dr * np.arange(-1, n_radial + 2)
    phi = B.profile(r)
    d1 = (phi[2:] - phi[:-2]) / (2 * dr)
    d2 = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / dr**2
    rr, vv = r[1:-1], phi[1:-1]
    E = Ellipticity(B.lam_P, B.Lam_P)
    lhs = np.empty(rr.size)
    for i in range(rr.size):
        spec = radial_hessian_spectrum(d1[i], d2[i], rr[i], B.n)
        pos, neg = np.clip(spec, 0, None).sum(), np.clip(spec, None, 0).sum()
        lhs[i] = E.lam * pos + E.Lam * neg - B.gamma * abs(d1[i]) - B.d * vv[i]
    rhs = log_absorption(np.clip(vv, 0, None), B.a)
    margin = lhs - rhs
    return BarrierMargins(rr, lhs, rhs, margin, float(np.min(margin)),
                          bool(np.all(d1 < 0)), bool(np.all(d2 > 0)))


def barrier_margins_2d(B: BarrierSpec, grid: Grid) -> BarrierMargins:
    """Same check with the grid's own discrete ``M^-`` and upwinded gradient at annulus nodes."""
    if grid.dim != B.n:
        raise ValidationError("planar check needs a grid of the barrier dimension")
    build_barrier(B, grid)  # resolution gate
    r = _radii(B, grid)
    # the formula is smooth away from the center, so evaluate it on every node
    v = B.profile(np.maximum(r, 1e-3 * B.R))
    E = Ellipticity(B.lam_P, B.Lam_P)
    L = extremal_L(grid, v, -1, E, B.gamma) - B.d * v[grid.interior]
    sel = np.isin(grid.interior, annulus_nodes(B, grid))
    nodes = grid.interior[sel]
    vals = v[nodes]
    rhs = log_absorption(np.clip(vals, 0, None), B.a)
    margin = L[sel] - rhs
    return BarrierMargins(r[nodes], L[sel], rhs, margin, float(np.min(margin)), True, True)


# ---------------------------------------------------------------------------
# Strong maximum principle and Hopf margin


@dataclass(frozen=True)
class SMPVerdict:
    """Classification of a nonnegative discrete supersolution."""

    label: str  # identically_zero | strictly_positive | VIOLATION | precondition
    min_interior: float
    supersolution_slack: float
    message: str


def smp_classify(u, grid: Grid, E: Ellipticity, gamma: float = 0.0, d: float = 0.0,
                 a: float = 0.0, tol: float = 1e-8) -> SMPVerdict:
    """Classify ``u >= 0`` with ``M^-(D^2u) - gamma|Du| - d u <= a u |ln u|``."""
    u = np.asarray(u, dtype=float)
    idx = grid.interior
    if np.min(u) < -tol:
        return SMPVerdict("precondition", float(np.min(u[idx])), np.nan,
                          f"u takes the negative value {np.min(u):.3g}")
    L = extremal_L(grid, u, -1, E, gamma) - d * u[idx]
    excess = L - log_absorption(np.clip(u[idx], 0, None), a)
    slack = float(-np.max(excess))
    if slack < -tol:
        k = int(idx[np.argmax(excess)])
        return SMPVerdict("precondition", float(np.min(u[idx])), slack,
                          f"not a supersolution: excess {-slack:.3g} at node {k}")
    ui = u[idx]
    zero = ui <= tol
    if np.all(zero):
        return SMPVerdict("identically_zero", float(np.min(ui)), slack, "u vanishes inside")
    if not np.any(zero):
        return SMPVerdict("strictly_positive", float(np.min(ui)), slack, "u is positive inside")
    k = int(idx[np.flatnonzero(zero)[0]])
    logger.error("SMP violation: interior zero at node %d next to positive values", k)
    return SMPVerdict("VIOLATION", float(np.min(ui)), slack,
                      f"interior zero at node {k} while u is positive elsewhere")


def hopf_margin(u, grid: Grid) -> float:
    """Smallest inward difference quotient ``(u(neighbor) - u) / step`` over the
    boundary nodes that face the interior."""
    u = np.asarray(u, dtype=float)
    q = (u[grid.inward_neighbor] - u[grid.boundary]) / grid.inward_step
    return float(np.min(q[grid.facing_interior]))


__all__ = [
    "BarrierMargins",
    "BarrierSpec",
    "SMPVerdict",
    "annulus_nodes",
    "barrier_margins",
    "barrier_margins_2d",
    "build_barrier",
    "hopf_margin",
    "log_absorption",
    "smp_classify",
    "vazquez_C0",
    "vazquez_alpha",
]
