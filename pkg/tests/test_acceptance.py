"""Acceptance suite: one test per criterion, each timed and reported in the summary."""

from __future__ import annotations

import dataclasses
import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from qgrowth.barriers import (
    BarrierSpec,
    annulus_nodes,
    barrier_margins,
    barrier_margins_2d,
    build_barrier,
    hopf_margin,
    smp_classify,
    vazquez_alpha,
)
from qgrowth.bounds import abp_check, pure_forcing, verify_lower_bound
from qgrowth.config import bundled_scenarios, load_scenario, with_resolution
from qgrowth.continuation import (
    Caps,
    build_ctilde,
    detect_fold,
    homotopy_in_k,
    solutions_at,
    trace_branch,
    upper_solution,
)
from qgrowth.eigen import principal_eigenpair
from qgrowth.fixedpoint import solve_full, strictly_below
from qgrowth.mesh import build_interval_grid, build_planar_grid
from qgrowth.operators import Ellipticity, OperatorSpec, pucci_minus, pucci_plus, residual_P
from qgrowth.oracle import (
    extrapolated_reference,
    observed_orders,
    oracle_fold,
    radial_family,
    radial_family_r,
    radial_residual,
    richardson,
)
from qgrowth.transforms import ExpChange, semilinear_reduction
from qgrowth.verify import (
    BARRIER_CORPUS,
    brute_force_pucci,
    model_problem,
    random_smooth,
    random_symmetric,
    sandwich_orders,
)


def report(k: int, checks: dict[str, bool], detail: str, seconds: float, limit: float) -> None:
    checks = dict(checks)
    checks[f"runtime {seconds:.1f}s < {limit:g}s"] = seconds < limit
    ok = all(checks.values())
    failed = [name for name, v in checks.items() if not v]
    line = f"{detail}; {seconds:.1f}s" + (f"; failed: {', '.join(failed)}" if failed else "")
    ACCEPTANCE[k] = (ok, line)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {line}")
    assert ok, failed


def sine_seeds(grid, rng: np.random.Generator, count: int, scale: float) -> list[np.ndarray]:
    """Random sums of the first sine modes; zero on the boundary of (0, 1)."""
    x = grid.x
    out = []
    for _ in range(count):
        amp = rng.normal(scale=scale, size=4) / np.arange(1, 5)
        out.append(sum(amp[j] * np.sin((j + 1) * np.pi * x) for j in range(4)))
    return out


def increasing_in_param(points, grid) -> bool:
    pairs = zip(points[:-1], points[1:])
    return all(strictly_below(a.solution, b.solution, grid) for a, b in pairs)


# ---------------------------------------------------------------------------


def test_criterion_01_pucci_against_brute_force():
    t = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(200):
        d = 2 + i % 2
        X = random_symmetric(rng, d)
        lo = rng.uniform(0.2, 1.0)
        E = Ellipticity(lo, lo * rng.uniform(1.0, 4.0))
        worst = max(worst, abs(pucci_plus(X, E) - brute_force_pucci(X, E, +1)),
                    abs(pucci_minus(X, E) - brute_force_pucci(X, E, -1)))
    report(1, {"agreement 1e-6": worst < 1e-6}, f"200 matrices, worst error {worst:.2e}",
           time.perf_counter() - t, 5)


def test_criterion_02_sandwich_convergence_order():
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    E = Ellipticity(1.0, 2.0)
    worst = np.inf
    for _ in range(50):
        f = random_smooth(rng)
        m = rng.uniform(0.5, 2.0)
        for ch in (ExpChange(m, "v"), ExpChange(m, "w")):
            _, orders = sandwich_orders(f, ch, E)
            worst = min(worst, float(np.min(orders)))
    report(2, {"order >= 1.8": worst >= 1.8}, f"50 functions x 2 changes, min order {worst:.3f}",
           time.perf_counter() - t, 10)


def test_criterion_03_radial_family_oracle():
    t = time.perf_counter()
    orders, boundary = [], []
    for k in (0.0, 0.3, 0.6):
        errs = [radial_residual(k, 3, c) for c in (200, 400, 800)]
        orders.append(float(np.min(observed_orders(errs))))
        boundary.append(float(radial_family_r(k, 3, 1.0)))
        for e in np.eye(3):
            boundary.append(float(radial_family(k, 3, e)))
    ok_b = all(v == 0.0 for v in boundary)
    report(3, {"order >= 1.8": min(orders) >= 1.8, "u_k = 0 on |x| = 1": ok_b},
           f"orders {', '.join(f'{o:.3f}' for o in orders)}", time.perf_counter() - t, 5)


def test_criterion_04_coercive_uniqueness(rng):
    t = time.perf_counter()
    P = model_problem(256, h=lambda x: 1.0 + np.sin(3 * np.pi * x), lam=-1.0)
    sols = []
    for s in sine_seeds(P.grid, rng, 10, 2.0):
        rep = solve_full(P, s)
        sols.append(rep.solution if rep.converged else None)
    conv = [u for u in sols if u is not None]
    spread = max(float(np.max(np.abs(a - b))) for a, b in itertools.combinations(conv, 2))
    report(4, {"all 10 seeds converge": len(conv) == 10, "pairwise < 1e-8": spread < 1e-8},
           f"{len(conv)}/10 converged, spread {spread:.2e}", time.perf_counter() - t, 10)


def test_criterion_05_fold_scenario(fold_branch, fold_value, rng):
    t = time.perf_counter()
    br = fold_branch.value
    P = br.family.base
    g = P.grid
    half = trace_branch(P, (0.0, 10.0), 0.025, Caps(norm_cap=100.0))
    f_half = detect_fold(half)
    stable = f_half.present and format(fold_value, ".3g") == format(f_half.value, ".3g")

    above = P.with_lam(1.1 * fold_value)
    seeds = sine_seeds(g, rng, 8, 1.0)
    n_conv = sum(solve_full(above, s).converged for s in seeds)

    two = sorted(solutions_at(br, [0.5 * fold_value])[0], key=np.max)
    ordered = len(two) == 2 and strictly_below(two[0], two[1], g)
    u0 = solve_full(P.with_lam(0.0)).solution
    below_u0 = len(two) >= 1 and strictly_below(u0, two[0], g)
    lower = br.points[: br.folds[0]] if br.folds else br.points
    report(5, {"one fold": len(br.folds) == 1, "3 digits under ds/2": stable,
               "no solution at 1.1 fold": n_conv == 0, "two ordered solutions": ordered,
               "u0 below lower": below_u0, "lower increasing": increasing_in_param(lower, g)},
           f"fold {fold_value:.6g} (ds/2: {f_half.value:.6g}), {n_conv}/8 converge above",
           fold_branch.seconds + time.perf_counter() - t, 120)


def test_criterion_06_no_fold_scenario(negative_branch):
    t = time.perf_counter()
    br = negative_branch.value
    P = br.family.base
    g = P.grid
    u0 = solve_full(P.with_lam(0.0)).solution
    two_each, below_u0, ordered = [], [], []
    for lam in (0.25, 0.5, 1.0, 2.0):
        Pl = P.with_lam(lam)
        low = solve_full(Pl).solution
        up = upper_solution(P, lam, 1.0)
        res = float(np.max(np.abs(residual_P(up, Pl))))
        two_each.append(res < 1e-6 and float(np.max(np.abs(up - low))) > 1e-3)
        below_u0.append(strictly_below(low, u0, g))
        ordered.append(strictly_below(low, up, g))
    decreasing = all(strictly_below(b.solution, a.solution, g)
                     for a, b in zip(br.points[:-1], br.points[1:]))
    full = br.termination == "range-exhausted" and br.params[-1] == 2.0
    report(6, {"two solutions per lam": all(two_each), "lower below u0": all(below_u0),
               "lower below upper": all(ordered), "lower decreasing": decreasing,
               "no fold on (0, 2]": not br.folds and full},
           f"{len(br)} branch points, ends at lam={br.params[-1]:g}",
           negative_branch.seconds + time.perf_counter() - t, 120)


def test_criterion_07_blow_up(fold_branch, fold_value):
    t = time.perf_counter()
    br = fold_branch.value
    fracs = (0.4, 0.2, 0.1, 0.05)
    found = solutions_at(br, [f * fold_value for f in fracs])
    uppers = [max(float(np.max(u)) for u in sols) if len(sols) == 2 else np.nan for sols in found]
    u0 = solve_full(br.family.base.with_lam(0.0)).solution
    monotone = all(b > a for a, b in zip(uppers[:-1], uppers[1:]))
    big = uppers[-1] > 10 * float(np.max(np.abs(u0)))
    report(7, {"upper max increasing": monotone, "exceeds 10 |u0|": big,
               "norm-cap termination": br.termination == "norm-cap"},
           "upper max " + ", ".join(f"{v:.4g}" for v in uppers)
           + f" vs |u0| = {np.max(np.abs(u0)):.4g}",
           fold_branch.seconds + time.perf_counter() - t, 120)


def test_criterion_08_lower_bound_stability():
    t = time.perf_counter()

    def h(x):
        return 2 * np.sin(3 * np.pi * x) - 0.5

    b1 = trace_branch(model_problem(128, h), (0.0, 2.0), 0.05, Caps(norm_cap=100.0))
    b2 = trace_branch(model_problem(256, h), (0.0, 2.0), 0.05, Caps(norm_cap=100.0))
    rep = verify_lower_bound(b1, 2.0, refined=b2)
    report(8, {"window covered": rep.covered, "u^- present": rep.sup_neg > 0,
               "change < 5%": rep.stability_neg < 0.05},
           f"sup u^- {rep.sup_neg:.5g} -> {rep.refined_sup_neg:.5g}, "
           f"change {rep.stability_neg:.2e}", time.perf_counter() - t, 60)


def test_criterion_09_k_homotopy(fold_branch, fold_value, rng):
    t = time.perf_counter()
    P = fold_branch.value.family.base
    lam = 0.5 * fold_value
    E = P.operator.ellipticity
    eig = principal_eigenpair(OperatorSpec("pucci_minus", E), P.c, P.grid, tol=1e-10)
    # h >= 0 keeps every branch solution nonnegative, so the lower constant is zero
    ct = build_ctilde(P.c, P.h, Lambda2=5.13, C0=0.0, eigen=eig, m=P.M.mu1 / E.Lam)
    kb = homotopy_in_k(P, lam, ct, (0.0, 1.0), 0.02, Caps(norm_cap=100.0))
    kf = detect_fold(kb)
    Pk = P.with_lam(lam).with_h(P.h + ct)
    n_conv = sum(solve_full(Pk, s).converged for s in sine_seeds(P.grid, rng, 8, 1.0))
    report(9, {"fold below k = 1": kf.present and kf.value < 1.0,
               "no solution at k = 1": n_conv == 0},
           f"k fold {kf.value:.5g}, {n_conv}/8 converge at k = 1", time.perf_counter() - t, 60)


def test_criterion_10_eigenpair():
    t = time.perf_counter()
    op = OperatorSpec("pucci_minus", Ellipticity(1.0, 1.0))
    g = build_interval_grid(0.0, 1.0, 512)
    fine = principal_eigenpair(op, 1.0, g, tol=1e-10)
    coarse = principal_eigenpair(op, 1.0, build_interval_grid(0.0, 1.0, 256), tol=1e-10)
    double = principal_eigenpair(op, 2.0, g, tol=1e-10)
    err = abs(fine.lambda1 - np.pi**2)
    rich = abs(float(richardson(coarse.lambda1, fine.lambda1)) - np.pi**2)
    homog = abs(double.lambda1 - fine.lambda1 / 2)
    report(10, {"error < 1e-3": err < 1e-3, "extrapolated < 1e-6": rich < 1e-6,
                "phi positive": bool(np.all(fine.phi1[g.interior] > 0)),
                "homogeneity": homog < 1e-8},
           f"lambda1 {fine.lambda1:.10g}, error {err:.2e}, extrapolated {rich:.2e}, "
           f"homogeneity {homog:.1e}", time.perf_counter() - t, 10)


def test_criterion_11_barrier_corpus():
    t = time.perf_counter()
    worst, finite, strict = np.inf, True, True
    for (lam_P, Lam_P), (R, gamma, d, a) in itertools.product(((1.0, 1.0), (1.0, 2.0)),
                                                              BARRIER_CORPUS):
        al = vazquez_alpha(R, lam_P, Lam_P, gamma, d, a, 0.25)
        finite &= bool(np.isfinite(al))
        B = BarrierSpec.design((0.0, 0.0), R, 0.25, lam_P, Lam_P, gamma, d, a)
        grid = build_planar_grid("rectangle", (-R, R, -R, R), 64)
        values = build_barrier(B, grid)
        finite &= bool(np.all(np.isfinite(values[annulus_nodes(B, grid)])))
        radial, planar = barrier_margins(B), barrier_margins_2d(B, grid)
        strict &= radial.strict and planar.strict
        worst = min(worst, radial.min_margin, planar.min_margin)
    report(11, {"finite alpha": finite, "strict at every annulus node": strict},
           f"{2 * len(BARRIER_CORPUS)} configurations, worst margin {worst:.3g}",
           time.perf_counter() - t, 10)


def test_criterion_12_abp_smp_hopf(negative_branch, fold_branch):
    t = time.perf_counter()
    E = Ellipticity(1.0, 1.0)
    accepted, abp_ok = 0, True
    for br in (negative_branch.value, fold_branch.value):
        for pt in br.points:
            P = br.family.problem(pt.param)
            f = pure_forcing(pt.solution, P)
            if np.any(f < 0):
                continue
            rep = abp_check(pt.solution, f, P.grid, E, mu=P.M.mu1, tol=1e-7)
            accepted += 1
            abp_ok &= rep.gated and not rep.violation and rep.margin <= 1e-7

    corpus = []
    g1 = build_interval_grid(0.0, 1.0, 256)
    corpus.append((g1, E, principal_eigenpair(OperatorSpec("pucci_minus", E), 1.0, g1).phi1))
    corpus.append((g1, E, g1.x * (1 - g1.x)))
    corpus.append((g1, E, np.sin(np.pi * g1.x)))
    fb = fold_branch.value
    corpus += [(fb.family.base.grid, E, p.solution) for p in fb.points[1:40:8]]
    g2 = build_planar_grid("rectangle", (0.0, 1.0, 0.0, 1.0), 48)
    E2 = Ellipticity(1.0, 2.0)
    corpus.append((g2, E2, np.sin(np.pi * g2.x) * np.sin(np.pi * g2.y)))
    corpus.append((g2, E2, g2.x * (1 - g2.x) * g2.y * (1 - g2.y)))
    op2 = OperatorSpec("pucci_minus", E2)
    corpus.append((g2, E2, principal_eigenpair(op2, 1.0, g2).phi1))
    labels, hopf = [], []
    for grid, Ec, u in corpus:
        labels.append(smp_classify(u, grid, Ec).label)
        hopf.append(hopf_margin(u, grid))
    report(12, {"ABP on accepted solutions": accepted > 0 and abp_ok,
                "SMP strictly positive": all(lab == "strictly_positive" for lab in labels),
                "Hopf margin positive": min(hopf) > 0},
           f"{accepted} branch solutions with f^- = 0, {len(corpus)} supersolutions, "
           f"min Hopf margin {min(hopf):.3g}", time.perf_counter() - t, 30)


def test_criterion_13_cross_solver_oracle(fold_branch):
    t = time.perf_counter()
    compared, worst, names = 0, 0.0, []
    fold_ok = None
    for name in bundled_scenarios():
        sc = load_scenario(name)
        if sc.grid.kind != "interval" or not sc.problem.M.is_constant_scalar or sc.mode == "eigen":
            continue
        names.append(name)
        fine = with_resolution(sc, 2 * (sc.grid.size - 1))
        lams = sc.oracle["lambdas"] or [sc.problem.lam]
        for lam in lams:
            P1, P2 = sc.problem.with_lam(lam), fine.problem.with_lam(lam)
            u1, u2 = solve_full(P1).solution, solve_full(P2).solution
            ref = extrapolated_reference(semilinear_reduction(P1), sc.oracle["refine"])
            worst = max(worst, float(np.max(np.abs(richardson(u1, u2[::2]) - ref))))
            compared += 1
        if sc.oracle["fold"] and sc.mode == "branch":
            br = trace_branch(sc.problem, (sc.branch["lam_min"], sc.branch["lam_max"]),
                              sc.branch["ds"], Caps(norm_cap=sc.branch["norm_cap"]))
            pf = detect_fold(br)
            if not pf.present:
                continue
            red = dataclasses.replace(semilinear_reduction(sc.problem), lam=sc.branch["lam_min"])
            r = sc.oracle["refine"]
            f1, f2 = oracle_fold(red, r), oracle_fold(red, 2 * r)
            ov = float(richardson(f1.lam, f2.lam))
            o_lo, o_hi = min(f1.lam, f2.lam, ov), max(f1.lam, f2.lam, ov)
            width = (pf.bracket[1] - pf.bracket[0]) + (o_hi - o_lo)
            ok = abs(pf.value - ov) <= width
            fold_ok = ok if fold_ok is None else fold_ok and ok
    report(13, {"solutions agree within 1e-6": compared > 0 and worst < 1e-6,
                "folds agree within brackets": bool(fold_ok)},
           f"{compared} solves over {', '.join(names)}, worst {worst:.2e}",
           time.perf_counter() - t, 120)


@pytest.mark.parametrize("k", range(1, 14))
def test_every_criterion_reported(k):
    assert k in ACCEPTANCE, f"criterion {k} produced no result line"
