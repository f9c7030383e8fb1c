"""Property suites run by ``qgrowth verify``.

Each suite returns a :class:`SuiteResult` with counts, the worst margin seen
and the seed, so a run can be reproduced exactly.
"""

from __future__ import annotations

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial.transform import Rotation

from .barriers import BarrierSpec, barrier_margins, barrier_margins_2d, hopf_margin, smp_classify
from .bounds import abp_check, pure_forcing, q_lambda_residual, verify_lower_bound
from .continuation import Caps, trace_branch
from .eigen import principal_eigenpair
from .mesh import build_interval_grid, build_planar_grid
from .operators import (
    Ellipticity,
    LinearMember,
    MatrixField,
    OperatorSpec,
    ProblemSpec,
    pucci_minus,
    pucci_plus,
)
from .oracle import extrapolated_reference, observed_orders, radial_family, radial_residual, richardson
from .fixedpoint import solve_full
from .transforms import ExpChange, forward, inverse, sandwich_check, semilinear_reduction

logger = logging.getLogger(__name__)

SUITES = ("operators", "transforms", "barriers", "bounds", "eigen", "oracle")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    failures: int
    worst_margin: float
    seed: int
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Shared model problems


def model_problem(n: int, h=1.0, lam: float = 0.0, mu: float = 1.0, c=1.0) -> ProblemSpec:
    """``-u'' = lam c u + mu (u')^2 + h`` on (0, 1)."""
    g = build_interval_grid(0.0, 1.0, n)
    op = OperatorSpec("linear", Ellipticity(1.0, 1.0), (LinearMember(np.eye(1)),))
    h_fn = h if callable(h) else (lambda x, v=float(h): v + 0.0 * x)
    c_fn = c if callable(c) else (lambda x, v=float(c): v + 0.0 * x)
    return ProblemSpec.from_functions(g, op, MatrixField.scalar(mu, 1), c_fn, h_fn, lam)


# ---------------------------------------------------------------------------
# Brute-force Pucci oracle


def _rotations_2d(theta: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _frame_value(Q: np.ndarray, X: np.ndarray, E: Ellipticity, sign: int) -> np.ndarray:
    """``sup`` (sign=+1) or ``inf`` over diagonal ``lam <= D <= Lam`` of ``tr(Q D Q^T X)``.

    For a fixed frame the objective is linear in each diagonal entry, so the
    extremum takes each entry at an endpoint according to the sign of
    ``q_i . X q_i``.
    """
    s = np.einsum("...ji,jk,...ki->...i", Q, X, Q)
    hi, lo = (E.Lam, E.lam) if sign > 0 else (E.lam, E.Lam)
    return np.sum(np.where(s > 0, hi * s, lo * s), axis=-1)


def brute_force_pucci(X, E: Ellipticity, sign: int, samples: int = 4096) -> float:
    """Extremize ``tr(A X)`` over admissible ``A = Q D Q^T`` by dense frame sampling.

    The best sampled frames are polished by a local search, which is needed to
    reach agreement far below the sampling resolution.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[0]
    s = float(sign)
    if d == 1:
        return float(_frame_value(np.ones((1, 1)), X, E, sign))
    if d == 2:
        th = np.linspace(0.0, np.pi, samples, endpoint=False)
        vals = _frame_value(_rotations_2d(th), X, E, sign)
        k = int(np.argmax(s * vals))
        step = np.pi / samples
        res = minimize_scalar(lambda t: -s * _frame_value(_rotations_2d(np.array([t])), X, E, sign)[0],
                              bounds=(th[k] - step, th[k] + step), method="bounded",
                              options={"xatol": 1e-12})
        return float(max(s * vals[k], -res.fun) * s)
    if d == 3:
        rots = Rotation.random(samples, random_state=12345)
        Q = rots.as_matrix()
        vals = _frame_value(Q, X, E, sign)
        k = int(np.argmax(s * vals))

        def obj(rv):
            return -s * _frame_value(Rotation.from_rotvec(rv).as_matrix()[None], X, E, sign)[0]

        res = minimize(obj, rots[k].as_rotvec(), method="BFGS")
        best = s * max(s * vals[k], -res.fun)
        return float(best)
    raise ValueError("brute force implemented for dimensions 1 to 3")


def random_symmetric(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(scale=scale, size=(d, d))
    return 0.5 * (A + A.T)


def suite_operators(seed: int = 0, count: int = 200) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst, fails = 0.0, 0
    for i in range(count):
        d = 2 if i % 2 == 0 else 3
        X = random_symmetric(rng, d)
        lo = rng.uniform(0.2, 1.0)
        E = Ellipticity(lo, lo * rng.uniform(1.0, 4.0))
        for sign, fn in ((1, pucci_plus), (-1, pucci_minus)):
            err = abs(fn(X, E) - brute_force_pucci(X, E, sign))
            worst = max(worst, err)
            fails += err > 1e-6
    return SuiteResult("operators", fails == 0, 2 * count, int(fails), worst, seed,
                       details={"tolerance": 1e-6})


# ---------------------------------------------------------------------------


def random_smooth(rng: np.random.Generator, terms: int = 4):
    """Random trigonometric sum with decaying amplitudes."""
    amp = rng.normal(size=terms) / np.arange(1, terms + 1)
    phase = rng.uniform(0, 2 * np.pi, terms)

    def f(x):
        return sum(amp[j] * np.sin((j + 1) * np.pi * x + phase[j]) for j in range(terms))

    return f


def sandwich_orders(f, change: ExpChange, E: Ellipticity, cells=(128, 256, 512)):
    viol = []
    for n in cells:
        g = build_interval_grid(0.0, 1.0, n)
        viol.append(sandwich_check(g, f(g.x), change, E).max_violation)
    viol = np.array(viol)
    if viol[-1] <= 1e-12:
        return viol, np.array([np.inf] * (len(cells) - 1))
    return viol, observed_orders(viol)


def suite_transforms(seed: int = 0, count: int = 50) -> SuiteResult:
    rng = np.random.default_rng(seed)
    E = Ellipticity(1.0, 2.0)
    worst_order, fails, checks, roundtrip = np.inf, 0, 0, 0.0
    for _ in range(count):
        f = random_smooth(rng)
        m = rng.uniform(0.5, 2.0)
        for ch in (ExpChange(m, "v"), ExpChange(m, "w")):
            _, orders = sandwich_orders(f, ch, E)
            worst_order = min(worst_order, float(np.min(orders)))
            fails += bool(np.min(orders) < 1.8)
            checks += 1
            u = f(np.linspace(0, 1, 101))
            roundtrip = max(roundtrip, float(np.max(np.abs(inverse(forward(u, ch), ch) - u))))
    fails += roundtrip >= 1e-12
    return SuiteResult("transforms", fails == 0, checks + 1, int(fails), worst_order, seed,
                       details={"min_order": worst_order, "roundtrip_error": roundtrip})


# ---------------------------------------------------------------------------


BARRIER_CORPUS = tuple(itertools.product((0.5, 1.0), (0.0, 1.0), (0.0, 1.0), (0.5, 2.0)))


def suite_barriers(seed: int = 0, lam_P: float = 1.0, Lam_P: float = 2.0, mu: float = 0.25,
                   planar_n: int = 64) -> SuiteResult:
    worst, fails, rows = np.inf, 0, []
    for R, gamma, d, a in BARRIER_CORPUS:
        B = BarrierSpec.design((0.0, 0.0), R, mu, lam_P, Lam_P, gamma, d, a)
        radial = barrier_margins(B)
        planar = barrier_margins_2d(B, build_planar_grid("rectangle", (-R, R, -R, R), planar_n))
        ok = radial.strict and planar.strict and radial.decreasing and radial.convex
        fails += not ok
        worst = min(worst, radial.min_margin, planar.min_margin)
        rows.append({"R": R, "gamma": gamma, "d": d, "a": a, "alpha": B.alpha,
                     "radial_margin": radial.min_margin, "planar_margin": planar.min_margin})
    return SuiteResult("barriers", fails == 0, len(BARRIER_CORPUS), int(fails), worst, seed,
                       details={"corpus": rows})


# ---------------------------------------------------------------------------


def suite_bounds(seed: int = 0) -> SuiteResult:
    fails, checks = 0, 0
    E = Ellipticity(1.0, 1.0)
    # nonpositive forcing: lower solutions have f^- = 0 and peak on the boundary
    P = model_problem(128, h=-1.0)
    br = trace_branch(P, (0.0, 2.0), ds=0.1, caps=Caps(norm_cap=100))
    worst_abp = -np.inf
    for pt in br.points:
        Pl = P.with_lam(pt.param)
        rep = abp_check(pt.solution, pure_forcing(pt.solution, Pl), P.grid, E,
                        mu=1.0, tol=1e-7)
        checks += 1
        fails += (not rep.gated) or rep.margin > 1e-7
        worst_abp = max(worst_abp, rep.margin)
    # mixed forcing: bounded negative part, stable under refinement, (Q_lam) holds
    h = lambda x: 2 * np.sin(3 * np.pi * x) - 0.5  # noqa: E731
    b1 = trace_branch(model_problem(128, h), (0.0, 2.0), ds=0.05, caps=Caps(norm_cap=100))
    b2 = trace_branch(model_problem(256, h), (0.0, 2.0), ds=0.05, caps=Caps(norm_cap=100))
    rep = verify_lower_bound(b1, 2.0, refined=b2)
    checks += 1
    fails += not (rep.covered and rep.stability_neg < 0.05)
    worst_q = -np.inf
    for pt in b2.points:
        q = q_lambda_residual(pt.solution, b2.family.problem(pt.param))
        checks += 1
        fails += q.saturated or q.max_residual > 1e-6
        worst_q = max(worst_q, q.max_residual)
    return SuiteResult("bounds", fails == 0, checks, int(fails), worst_abp, seed,
                       details={"lower_bound": rep.sup_neg, "stability": rep.stability_neg,
                                "q_lambda_worst": worst_q})


# ---------------------------------------------------------------------------


def suite_eigen(seed: int = 0) -> SuiteResult:
    E = Ellipticity(1.0, 1.0)
    op = OperatorSpec("pucci_minus", E)
    out = {}
    for n in (256, 512):
        g = build_interval_grid(0.0, 1.0, n)
        out[n] = principal_eigenpair(op, 1.0, g, tol=1e-10)
    g = build_interval_grid(0.0, 1.0, 512)
    half = principal_eigenpair(op, 2.0, g, tol=1e-10)
    err = abs(out[512].lambda1 - np.pi**2)
    rich = abs(richardson(out[256].lambda1, out[512].lambda1) - np.pi**2)
    homog = abs(half.lambda1 - out[512].lambda1 / 2)
    phi = out[512].phi1
    positive = bool(np.all(phi[g.interior] > 0))
    smp = smp_classify(phi, g, E, tol=1e-8)
    hopf = hopf_margin(phi, g)
    checks = [err < 1e-3, rich < 1e-6, homog < 1e-8, positive, smp.label == "strictly_positive",
              hopf > 0]
    return SuiteResult("eigen", all(checks), len(checks), int(len(checks) - sum(checks)),
                       float(err), seed,
                       details={"lambda1": out[512].lambda1, "richardson_error": rich,
                                "homogeneity_error": homog, "hopf_margin": hopf})


# ---------------------------------------------------------------------------


def suite_oracle(seed: int = 0) -> SuiteResult:
    fails, checks, worst_order = 0, 0, np.inf
    for k in (0.0, 0.3, 0.6):
        e = [radial_residual(k, 3, c) for c in (200, 400, 800)]
        o = float(np.min(observed_orders(e)))
        worst_order = min(worst_order, o)
        checks += 2
        fails += o < 1.8
        fails += radial_family(k, 3, np.array([1.0, 0.0, 0.0])) != 0.0
    worst_diff = 0.0
    for lam in (0.0, 1.0):
        P1, P2 = model_problem(128, lam=lam), model_problem(256, lam=lam)
        u1, u2 = solve_full(P1).solution, solve_full(P2).solution
        ref = extrapolated_reference(semilinear_reduction(P1), 4)
        diff = float(np.max(np.abs(richardson(u1, u2[::2]) - ref)))
        worst_diff = max(worst_diff, diff)
        checks += 1
        fails += diff >= 1e-6
    return SuiteResult("oracle", fails == 0, checks, int(fails), worst_diff, seed,
                       details={"min_radial_order": worst_order, "cross_solver": worst_diff})


RUNNERS = {"operators": suite_operators, "transforms": suite_transforms,
           "barriers": suite_barriers, "bounds": suite_bounds, "eigen": suite_eigen,
           "oracle": suite_oracle}


def run_suites(name: str, seed: int = 0, threads: int = 1) -> list[SuiteResult]:
    """Run one suite or ``all``; results come back in :data:`SUITES` order."""
    names = list(SUITES) if name == "all" else [name]
    for n in names:
        if n not in RUNNERS:
            raise ValueError(f"unknown suite {n!r}; expected one of {SUITES + ('all',)}")

    def run(n):
        t = time.perf_counter()
        res = RUNNERS[n](seed=seed)
        res.seconds = time.perf_counter() - t
        logger.info("suite %s: %s (%d checks, %d failures)", n, "pass" if res.passed else "FAIL",
                    res.checks, res.failures)
        return res

    if threads > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, names))
    return [run(n) for n in names]


__all__ = ["BARRIER_CORPUS", "SUITES", "SuiteResult", "brute_force_pucci", "model_problem",
           "random_smooth", "random_symmetric", "run_suites", "sandwich_orders"]
