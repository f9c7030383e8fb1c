from __future__ import annotations

import numpy as np
import pytest

from qgrowth.bounds import (
    abp_check,
    empirical_lower_constant,
    lp_norm,
    pure_forcing,
    q_lambda_residual,
    verify_lower_bound,
    verify_upper_bound,
)
from qgrowth.continuation import Caps, detect_fold, trace_branch
from qgrowth.errors import ValidationError
from qgrowth.mesh import build_interval_grid
from qgrowth.operators import Ellipticity, extremal_L
from qgrowth.verify import model_problem

E1 = Ellipticity(1.0, 1.0)


@pytest.fixture(scope="module")
def positive_branches():
    out = {}
    for n in (64, 128):
        out[n] = trace_branch(model_problem(n, h=1.0), (0.0, 10.0), 0.05, Caps(norm_cap=100.0))
    return out


def test_nonnegative_branch_has_no_negative_part(positive_branches):
    rep = verify_lower_bound(positive_branches[64], 2.0)
    assert rep.sup_neg == 0 and rep.covered


def test_window_past_the_fold_reports_accepted_points(positive_branches):
    br = positive_branches[64]
    rep = verify_lower_bound(br, 50.0)
    assert not rep.covered
    assert all(p <= br.params.max() for p, _, _ in rep.table)


def test_upper_bound_window_is_finite_and_stable(positive_branches):
    fold = detect_fold(positive_branches[128]).value
    rep = verify_upper_bound(positive_branches[64], 0.2 * fold, 0.9 * fold,
                             refined=positive_branches[128])
    assert rep.covered and np.isfinite(rep.sup_abs) and rep.stability_abs < 0.05


def test_upper_sheet_near_zero_is_capped(positive_branches):
    fold = detect_fold(positive_branches[64]).value
    rep = verify_upper_bound(positive_branches[64], 0.0, 0.05 * fold)
    assert rep.capped and rep.sup_abs == np.inf


def test_degenerate_window(positive_branches):
    rep = verify_upper_bound(positive_branches[64], 1.0, 1.0)
    assert rep.degenerate
    with pytest.raises(ValidationError):
        verify_upper_bound(positive_branches[64], 2.0, 1.0)


def test_mixed_forcing_lower_bound_stability():
    def h(x):
        return np.sin(2 * np.pi * x) - 0.25

    b1 = trace_branch(model_problem(64, h), (0.0, 1.0), 0.05, Caps(norm_cap=100.0))
    b2 = trace_branch(model_problem(128, h), (0.0, 1.0), 0.05, Caps(norm_cap=100.0))
    rep = verify_lower_bound(b1, 1.0, refined=b2)
    assert rep.sup_neg > 0 and rep.stability_neg < 0.05
    C = empirical_lower_constant([b1, b2], 1.0)
    assert C == max(rep.sup_neg, rep.refined_sup_neg)


def test_abp_subsolution_with_nonnegative_forcing():
    g = build_interval_grid(0.0, 1.0, 64)
    u = g.x**2  # convex, so L+[u] = 2 >= f = 1
    rep = abp_check(u, 1.0, g, E1)
    assert rep.gated and rep.margin <= 0 and not rep.violation


def test_abp_zero():
    g = build_interval_grid(0.0, 1.0, 16)
    rep = abp_check(np.zeros(g.size), 0.0, g, E1)
    assert rep.gated and rep.margin == 0 and rep.fneg_norm == 0


def test_abp_interior_bump_has_finite_ratio():
    g = build_interval_grid(0.0, 1.0, 128)
    u = np.sin(np.pi * g.x)
    f = extremal_L(g, u, +1, E1)
    rep = abp_check(u, f, g, E1)
    assert rep.gated and rep.margin == pytest.approx(1.0)
    assert rep.fneg_norm == pytest.approx(lp_norm(g, np.clip(-f, 0, None), 3))
    assert 0 < rep.ratio < np.inf


def test_abp_gate():
    g = build_interval_grid(0.0, 1.0, 32)
    rep = abp_check(-(g.x**2), 1.0, g, E1)
    assert not rep.gated and np.isnan(rep.margin)


def test_q_lambda_trivial_for_nonnegative_u():
    P = model_problem(64, h=1.0, lam=1.0)
    u = np.sin(np.pi * P.grid.x)
    rep = q_lambda_residual(u, P)
    assert np.all(rep.w == 0) and rep.max_residual <= 0 and not rep.saturated


def test_q_lambda_holds_on_coercive_solutions():
    from qgrowth.fixedpoint import solve_full

    worst = []
    for n in (64, 128):
        P = model_problem(n, h=lambda x: np.cos(2 * np.pi * x), lam=-0.5)
        rep = q_lambda_residual(solve_full(P).solution, P)
        worst.append(rep.max_residual)
    assert worst[1] < 1e-6 or worst[1] < 0.3 * worst[0]


def test_q_lambda_saturation_flag():
    P = model_problem(16, h=-1.0)
    u = -10.0 * np.sin(np.pi * P.grid.x)  # m u^- reaches 10
    u[P.grid.boundary] = 0
    u[P.grid.interior] = np.minimum(u[P.grid.interior], -40.0)
    assert q_lambda_residual(u, P).saturated


def test_pure_forcing_sign():
    P = model_problem(16, h=-1.0, lam=0.5)
    u = -np.sin(np.pi * P.grid.x)
    np.testing.assert_allclose(pure_forcing(u, P), 1.0 + 0.5 * np.sin(np.pi * P.grid.x[P.grid.interior]))
