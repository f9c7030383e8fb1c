"""Command line runner: ``qgrowth <command> --config <scenario> --out <dir>``.

Exit status is 0 on success, 1 when a solve or a verification fails, and 2
for configuration errors (the message names the field and its line).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import verify_lower_bound, verify_upper_bound
from .config import Scenario, load_scenario, with_resolution
from .continuation import (
    Branch,
    Caps,
    build_ctilde,
    detect_fold,
    homotopy_in_k,
    reverify,
    trace_branch,
    upper_solution,
)
from .eigen import principal_eigenpair
from .errors import ConfigurationError, ConvergenceError, QGrowthError, UnsupportedReductionError
from .fixedpoint import solve_full, strictly_below
from .operators import OperatorSpec, residual_P
from .oracle import extrapolated_reference, oracle_fold, richardson
from .report import (
    BRANCH_COLUMNS,
    branch_figure,
    profile_figure,
    write_branch_csv,
    write_json,
    write_profile_csv,
    write_rows,
    write_solutions_csv,
)
from .transforms import semilinear_reduction
from .verify import SUITES, run_suites

logger = logging.getLogger("qgrowth")

COMMANDS = ("solve", "branch", "homotopy-k", "eigen", "verify", "oracle-compare")


class RunFailure(QGrowthError):
    """A solver or verification step failed; outputs written so far are kept."""


# ---------------------------------------------------------------------------
# helpers


def _env_float(name: str):
    val = os.environ.get(name)
    if val is None:
        return None
    try:
        return float(val)
    except ValueError:
        raise ConfigurationError(f"environment variable {name}={val!r} is not a number",
                                 field=name) from None


def _env_int(name: str):
    val = os.environ.get(name)
    if val is None:
        return None
    try:
        return int(val)
    except ValueError:
        raise ConfigurationError(f"environment variable {name}={val!r} is not an integer",
                                 field=name) from None


def _random_seeds(sc: Scenario, rng: np.random.Generator, count: int, scale: float):
    """Random grid functions vanishing on the boundary: smooth modes in 1D, bumps in 2D."""
    g = sc.grid
    out = []
    for _ in range(count):
        if g.dim == 1:
            a, b = g.x[0], g.x[-1]
            t = (g.x - a) / (b - a)
            amp = rng.normal(scale=scale, size=4) / np.arange(1, 5)
            u = sum(amp[j] * np.sin((j + 1) * np.pi * t) for j in range(4))
        else:
            u = rng.normal(scale=scale) * g.distance / max(np.max(g.distance), 1e-300)
        u = np.asarray(u, dtype=float)
        u[g.boundary] = 0.0
        out.append(u)
    return out


def _caps(sc: Scenario) -> Caps:
    return Caps(norm_cap=sc.branch["norm_cap"], max_points=sc.branch["max_points"])


def _probe(sc: Scenario):
    p = sc.branch.get("probe")
    return None if p is None else sc.grid.nearest_node(p)


def _lambda_branch(sc: Scenario, tol: float) -> Branch:
    b = sc.branch
    return trace_branch(sc.problem, (b["lam_min"], b["lam_max"]), b["ds"], _caps(sc), tol=tol,
                        probe=_probe(sc), direction=b["direction"])


def _point_row(kind, p, u, probe, resid):
    return (kind, p, float("nan"), float(np.max(np.abs(u))), float(np.max(u)), float(np.min(u)),
            float(u[probe]), False, resid)


def _sheet_monotonicity(branch: Branch) -> str:
    """``increasing``/``decreasing``/``mixed`` for the ordered solutions before the first fold."""
    pts = branch.points[: branch.folds[0]] if branch.folds else branch.points
    inc = dec = True
    for a, b in zip(pts[:-1], pts[1:]):
        if b.param == a.param:
            continue
        lo, hi = (a, b) if b.param > a.param else (b, a)
        inc &= strictly_below(lo.solution, hi.solution, branch.family.base.grid)
        dec &= strictly_below(hi.solution, lo.solution, branch.family.base.grid)
    return "increasing" if inc else ("decreasing" if dec else "mixed")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(sc: Scenario, out: Path, seed: int, threads: int, tol: float) -> dict:
    P = sc.problem.with_lam(sc.solve["lam"])
    rng = np.random.default_rng(seed)
    seeds = [None] + _random_seeds(sc, rng, sc.solve["seeds"], sc.solve["seed_scale"])
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        reports = list(pool.map(lambda s: solve_full(P, s, tol), seeds))
    found: list[np.ndarray] = []
    for rep in reports:
        if rep.converged and not any(np.max(np.abs(rep.solution - f)) < 1e-6 for f in found):
            found.append(rep.solution)
    found.sort(key=lambda u: float(np.max(u)))
    conv = [r for r in reports if r.converged]
    spread = max((float(np.max(np.abs(a.solution - b.solution))) for a in conv for b in conv),
                 default=float("nan"))
    if found:
        write_profile_csv(out / "solution.csv", sc.grid.coords,
                          {f"u{i + 1}": u for i, u in enumerate(found)})
        profile_figure(out / "solution.svg", sc.grid,
                       {f"u{i + 1}": u for i, u in enumerate(found)}, f"{sc.name}, lam={P.lam:g}")
    summary = {"lam": P.lam, "seeds": len(seeds), "converged": len(conv),
               "distinct_solutions": len(found), "max_pairwise_difference": spread,
               "reasons": [r.reason for r in reports],
               "residuals": [float(np.max(np.abs(residual_P(u, P)))) for u in found]}
    write_json(out / "solve.json", summary)
    if not found:
        raise RunFailure("no seed converged")
    return summary


def cmd_branch(sc: Scenario, out: Path, seed: int, threads: int, tol: float) -> dict:
    br = _lambda_branch(sc, tol)
    write_branch_csv(out / "branch.csv", br)
    write_solutions_csv(out / "solutions.csv", br)
    fold = detect_fold(br)
    rv = reverify(br)
    summary = {"points": len(br), "termination": br.termination, "message": br.message,
               "folds": len(br.folds), "fold_value": fold.value if fold.present else None,
               "fold_bracket": list(fold.bracket) if fold.present else None,
               "lower_sheet": _sheet_monotonicity(br), "reverify_ok": rv.ok,
               "reverify_worst_residual": rv.worst_residual}
    extra = {}
    up = sc.upper.get("lambdas")
    if up:
        P = sc.problem

        def one(lam):
            try:
                return upper_solution(P, lam, sc.upper["h_ref"], sc.upper["ds"], tol)
            except ConvergenceError as exc:
                logger.error("upper solution at lam=%g failed: %s", lam, exc)
                return None

        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            uppers = list(pool.map(one, up))
        rows, ordered = [], []
        lowers = {}
        for lam, u in zip(up, uppers):
            if u is None:
                continue
            Pl = P.with_lam(lam)
            rows.append(_point_row("lambda", lam, u, br.probe_node,
                                   float(np.max(np.abs(residual_P(u, Pl))))))
            rep = solve_full(Pl, None, tol)
            if rep.converged:
                lowers[lam] = rep.solution
                ordered.append(strictly_below(rep.solution, u, sc.grid))
        write_rows(out / "branch_upper.csv", BRANCH_COLUMNS, rows)
        extra["upper sheet"] = ([r[1] for r in rows], [r[4] for r in rows])
        summary["upper"] = {"lambdas": up, "found": len(rows), "ordered_below": ordered}
        if len(rows) < len(up):
            summary["upper"]["failed"] = len(up) - len(rows)
    b = sc.bounds
    brows = []
    refined = None
    if sc.branch.get("refine_n"):
        refined = _lambda_branch(with_resolution(sc, sc.branch["refine_n"]), tol)
    if b.get("Lambda2") is not None:
        rep = verify_lower_bound(br, b["Lambda2"], refined)
        brows.append(("lower", *rep.window, rep.sup_neg, rep.sup_pos, rep.sup_abs, rep.covered,
                      rep.capped, rep.refined_sup_neg, rep.stability_neg))
        if b.get("Lambda1") is not None:
            rep = verify_upper_bound(br, b["Lambda1"], b["Lambda2"], refined)
            brows.append(("upper", *rep.window, rep.sup_neg, rep.sup_pos, rep.sup_abs,
                          rep.covered, rep.capped, rep.refined_sup_abs, rep.stability_abs))
    if brows:
        write_rows(out / "bounds.csv", ("bound", "window_lo", "window_hi", "sup_neg", "sup_pos",
                                        "sup_abs", "covered", "capped", "refined_value",
                                        "stability"), brows)
    branch_figure(out / "branch.svg", {"lambda branch": br}, fold, extra, sc.name)
    write_json(out / "branch.json", summary)
    if not rv.ok:
        raise RunFailure(f"reverification failed (residual ratio {rv.worst_ratio:.3g})")
    if br.termination == "step-failure":
        raise RunFailure(br.message)
    return summary


def _eigen_operator(sc: Scenario) -> OperatorSpec:
    op = sc.problem.operator
    return OperatorSpec("pucci_minus", op.ellipticity, b=op.b, d=op.d)


def cmd_homotopy(sc: Scenario, out: Path, seed: int, threads: int, tol: float) -> dict:
    hs = sc.homotopy
    br = _lambda_branch(sc, tol)
    fold = detect_fold(br)
    if hs.get("lam") is not None:
        lam = hs["lam"]
    elif fold.present:
        lam = hs["lam_fraction"] * fold.value
    else:
        raise ConfigurationError("no fold on the lambda branch; set homotopy.lam", field="homotopy.lam")
    P = sc.problem
    E = P.operator.ellipticity
    eig = principal_eigenpair(_eigen_operator(sc), P.c, sc.grid, tol=min(tol, 1e-8))
    m = P.M.mu1 / E.Lam
    Lambda2 = hs["Lambda2"] if hs.get("Lambda2") is not None else sc.branch["lam_max"]
    C0 = hs["C0"]
    if C0 is None:
        # twice the largest negative part seen on [0, Lambda2]
        C0 = 2.0 * max((max(0.0, -p.min_u) for p in br.points if 0 <= p.param <= Lambda2),
                       default=0.0)
    ct = build_ctilde(P.c, P.h, Lambda2, C0, eig, m)
    kb = homotopy_in_k(P, lam, ct, (0.0, hs["k_max"]), hs["ds"], Caps(norm_cap=sc.branch["norm_cap"]),
                       tol=tol)
    write_branch_csv(out / "homotopy.csv", kb)
    kf = detect_fold(kb)
    rng = np.random.default_rng(seed)
    Pk = P.with_lam(lam).with_h(P.h + hs["k_max"] * ct)
    seeds = _random_seeds(sc, rng, hs["seeds"], 1.0)
    reps = [solve_full(Pk, s, tol) for s in seeds]
    branch_figure(out / "homotopy.svg", {"k branch": kb}, kf, title=f"{sc.name}, lam={lam:.5g}")
    summary = {"lam": lam, "lambda_fold": fold.value if fold.present else None,
               "lambda1": eig.lambda1, "C0": C0, "Lambda2": Lambda2, "m": m,
               "k_fold": kf.value if kf.present else None,
               "k_fold_bracket": list(kf.bracket) if kf.present else None,
               "termination": kb.termination, "seeds_at_k_max": len(seeds),
               "converged_at_k_max": sum(r.converged for r in reps),
               "reasons_at_k_max": [r.reason for r in reps]}
    write_json(out / "homotopy.json", summary)
    return summary


def cmd_eigen(sc: Scenario, out: Path, seed: int, threads: int, tol: float) -> dict:
    op = _eigen_operator(sc)
    weight = sc.problem.c if sc.eigen["weight"] == "c" else sc.grid.evaluate(
        sc.expressions.get(sc.eigen["weight"]) or (lambda *a: 1.0 + 0 * a[0]))
    pair = principal_eigenpair(op, weight, sc.grid, tol=tol)
    summary = {"lambda1": pair.lambda1, "converged": pair.converged, "iterations": pair.iterations,
               "residual": pair.residual, "bounds": list(pair.bounds),
               "phi_positive": bool(np.all(pair.phi1[sc.grid.interior] > 0))}
    if sc.eigen["richardson"] and sc.grid.dim == 1 and (sc.grid.size - 1) % 2 == 0:
        coarse = with_resolution(sc, (sc.grid.size - 1) // 2)
        c2 = principal_eigenpair(op, coarse.problem.c, coarse.grid, tol=tol)
        summary["lambda1_coarse"] = c2.lambda1
        summary["lambda1_extrapolated"] = float(richardson(c2.lambda1, pair.lambda1))
    write_profile_csv(out / "eigen.csv", sc.grid.coords, {"phi1": pair.phi1})
    profile_figure(out / "eigen.svg", sc.grid, {"phi1": pair.phi1},
                   f"lambda1 = {pair.lambda1:.8g}")
    write_json(out / "eigen.json", summary)
    if not pair.converged:
        raise RunFailure("eigen iteration did not converge")
    return summary


def cmd_oracle(sc: Scenario, out: Path, seed: int, threads: int, tol: float) -> dict:
    if sc.grid.dim != 1:
        raise ConfigurationError("oracle comparison is implemented for interval scenarios",
                                 field="grid.domain")
    try:
        red = semilinear_reduction(sc.problem)
    except UnsupportedReductionError as exc:
        raise ConfigurationError(str(exc), field="coefficients.M") from None
    fine = with_resolution(sc, 2 * (sc.grid.size - 1))
    refine = sc.oracle["refine"]
    lams = sc.oracle["lambdas"] or [sc.problem.lam]

    def one(lam):
        P1, P2 = sc.problem.with_lam(lam), fine.problem.with_lam(lam)
        r1, r2 = solve_full(P1, None, min(tol, 1e-10)), solve_full(P2, None, min(tol, 1e-10))
        if not (r1.converged and r2.converged):
            return (lam, float("nan"), float("nan"), False)
        prim = richardson(r1.solution, r2.solution[::2])
        ref = extrapolated_reference(semilinear_reduction(P1), refine, seed=r1.solution)
        d = float(np.max(np.abs(prim - ref)))
        raw = float(np.max(np.abs(r1.solution - ref)))
        return (lam, d, raw, d < 1e-6)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(one, lams))
    write_rows(out / "oracle.csv", ("lambda", "extrapolated_difference", "raw_difference",
                                    "agree"), rows)
    summary = {"lambdas": lams, "agree": all(r[3] for r in rows),
               "worst_extrapolated_difference": max(r[1] for r in rows)}
    if sc.oracle["fold"]:
        br = _lambda_branch(sc, tol)
        pf = detect_fold(br)
        if pf.present:
            start = dataclasses.replace(red, lam=sc.branch["lam_min"])
            f1 = oracle_fold(start, refine)
            f2 = oracle_fold(start, 2 * refine)
            ov = float(richardson(f1.lam, f2.lam))
            o_lo, o_hi = min(f1.lam, f2.lam, ov), max(f1.lam, f2.lam, ov)
            width = (pf.bracket[1] - pf.bracket[0]) + (o_hi - o_lo)
            ok = abs(pf.value - ov) <= width
            summary["fold"] = {"primary": pf.value, "primary_bracket": list(pf.bracket),
                               "oracle": ov, "oracle_bracket": [o_lo, o_hi], "agree": bool(ok)}
            summary["agree"] = summary["agree"] and ok
        else:
            summary["fold"] = {"primary": None}
    write_json(out / "oracle.json", summary)
    if not summary["agree"]:
        raise RunFailure("primary and reference solutions disagree")
    return summary


def cmd_verify(suite: str, out: Path, seed: int, threads: int) -> dict:
    results = run_suites(suite, seed, threads)
    summary = {"suite": suite, "seed": seed, "passed": all(r.passed for r in results),
               "suites": [r.as_dict() for r in results]}
    write_json(out / "verify.json", summary)
    print(f"{'suite':<12}{'result':<8}{'checks':>8}{'failures':>10}  worst margin")
    for r in results:
        print(f"{r.name:<12}{'pass' if r.passed else 'FAIL':<8}{r.checks:>8}{r.failures:>10}  "
              f"{r.worst_margin:.4g}")
    if not summary["passed"]:
        raise RunFailure("verification failed: " + ", ".join(r.name for r in results if not r.passed))
    return summary


SCENARIO_COMMANDS = {"solve": cmd_solve, "branch": cmd_branch, "homotopy-k": cmd_homotopy,
                     "eigen": cmd_eigen, "oracle-compare": cmd_oracle}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgrowth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "verify":
            s.add_argument("suite", nargs="?", default="all", choices=SUITES + ("all",))
            s.add_argument("--config", help="ignored by verify; accepted for uniformity")
        else:
            s.add_argument("--config", required=True, help="scenario file or bundled name")
        s.add_argument("--out", default="qgrowth-out", help="output directory")
        s.add_argument("--seed", type=int, default=0, help="random seed (u64)")
        s.add_argument("--threads", type=int, default=None, help="worker threads")
        s.add_argument("--tol", type=float, default=None, help="solver tolerance")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _setup_logging(out: Path, verbose: bool) -> logging.Handler:
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    fh = logging.FileHandler(out / "verification.log", mode="w", encoding="utf-8")
    fh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(fh)
    if verbose:
        sh = logging.StreamHandler(sys.stderr)
        sh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(sh)
    return fh


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = _setup_logging(out, args.verbose)
    try:
        env_tol, env_threads = _env_float("QGROWTH_TOL"), _env_int("QGROWTH_THREADS")
        threads = args.threads or env_threads or 1
        tol = args.tol if args.tol is not None else env_tol
        if args.command == "verify":
            cmd_verify(args.suite, out, args.seed, threads)
            return 0
        sc = load_scenario(args.config, tol)
        logger.info("scenario %s (%s) from %s, tol %g", sc.name, args.command, sc.source, sc.tol)
        summary = SCENARIO_COMMANDS[args.command](sc, out, args.seed, threads, sc.tol)
        for k, v in summary.items():
            if not isinstance(v, (list, dict)):
                print(f"{k}: {v}")
        return 0
    except ConfigurationError as exc:
        name = f" [{exc.field}]" if exc.field else ""
        print(f"configuration error{name}: {exc}", file=sys.stderr)
        return 2
    except (RunFailure, QGrowthError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
