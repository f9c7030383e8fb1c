from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgrowth.dirichlet import solve_dirichlet
from qgrowth.errors import PreconditionError, ValidationError
from qgrowth.fixedpoint import (
    Truncation,
    apply_T,
    minimal_solution,
    solve_full,
    strictly_below,
    truncated_rhs,
)
from qgrowth.mesh import build_interval_grid
from qgrowth.operators import residual_P
from qgrowth.oracle import manufactured
from qgrowth.verify import model_problem

BIG = 1e3


def coercive(n=64):
    return model_problem(n, h=lambda x: 0.2 * (1 + np.sin(3 * np.pi * x)), lam=-1.0)


def test_apply_T_fixes_a_solution():
    P = coercive()
    rep = solve_full(P, tol=1e-11)
    assert np.max(np.abs(apply_T(rep.solution, P) - rep.solution)) < 1e3 * rep.effective_tol


def test_apply_T_at_zero_solves_linear_problem():
    P = coercive()
    U = apply_T(np.zeros(P.grid.size), P)
    ref = solve_dirichlet(P.operator, P.h, P.grid).solution
    np.testing.assert_allclose(U, ref, atol=1e-12)


def test_picard_iteration_converges_on_coercive_model():
    P = coercive()
    u = np.zeros(P.grid.size)
    for _ in range(200):
        u_next = apply_T(u, P)
        if np.max(np.abs(u_next - u)) < 1e-13:
            break
        u = u_next
    assert np.max(np.abs(residual_P(u_next, P))) < 1e-9


def test_truncation_is_inactive_inside_the_box():
    P = model_problem(32, h=1.0, lam=2.0)
    u = 0.1 * np.sin(np.pi * P.grid.x)
    T = Truncation(10.0, np.full(P.grid.size, -BIG), np.full(P.grid.size, BIG))
    r = residual_P(u, P)
    from qgrowth.operators import apply_F

    full = r[P.grid.interior] - apply_F(P.operator, P.grid, u)
    np.testing.assert_allclose(truncated_rhs(u, T, P), full, atol=1e-12)


def test_gradient_cap_replaces_quadratic_term():
    P = model_problem(32, h=0.0, lam=0.0)
    R = 1.5
    u = 2 * R * P.grid.x
    T = Truncation(R, np.full(P.grid.size, -BIG), np.full(P.grid.size, BIG))
    np.testing.assert_allclose(truncated_rhs(u, T, P), R**2, rtol=1e-12)


def test_below_alpha_freezes_at_alpha():
    P = model_problem(32, h=1.0, lam=1.0)
    g = P.grid
    alpha = -0.5 * np.sin(np.pi * g.x)
    T = Truncation(50.0, alpha, np.full(g.size, BIG))
    u = 0.3 * np.sin(2 * np.pi * g.x)
    k = int(np.argmax(alpha - u))  # a node where u < alpha
    assert u[k] < alpha[k]
    j = int(np.flatnonzero(g.interior == k)[0])
    assert truncated_rhs(u, T, P)[j] == pytest.approx(truncated_rhs(alpha, T, P)[j], abs=1e-12)


def test_truncation_validation():
    with pytest.raises(ValidationError):
        Truncation(0.0, np.zeros(3), np.ones(3))
    with pytest.raises(ValidationError):
        Truncation(1.0, np.ones(3), np.zeros(3))


def test_manufactured_seed_converges_immediately():
    P = model_problem(64, h=0.0, lam=1.0)
    u = np.sin(np.pi * P.grid.x)
    Pm = P.with_h(manufactured(u, P))
    rep = solve_full(Pm, seed=u)
    assert rep.converged and rep.iterations <= 2
    assert np.max(np.abs(rep.solution - u)) < 1e-8


def test_divergent_seed_is_reported():
    P = model_problem(64, h=1.0, lam=8.0)
    rep = solve_full(P, seed=50 * np.sin(np.pi * P.grid.x), max_iter=30)
    assert not rep.converged and rep.reason


def test_minimal_solution_unique_in_sandwich():
    P = coercive()
    u0 = solve_full(P).solution
    s = np.max(np.abs(u0))
    rep = minimal_solution(Truncation(50.0, u0 - s, u0 + s), P)
    assert rep.converged and np.max(np.abs(rep.solution - u0)) < 1e-8


def test_minimal_solution_when_alpha_solves():
    P = coercive()
    u0 = solve_full(P).solution
    rep = minimal_solution(Truncation(50.0, u0, u0 + 1.0), P)
    assert np.max(np.abs(rep.solution - u0)) < 1e-8


def test_minimal_solution_between_u0_and_upper_sheet():
    P = model_problem(64, h=1.0)
    u0 = solve_full(P).solution
    from qgrowth.continuation import Caps, solutions_at, trace_branch

    br = trace_branch(P, (0.0, 10.0), 0.05, Caps(norm_cap=30.0))
    lower, upper = sorted(solutions_at(br, [2.0])[0], key=np.max)
    T = Truncation(1.1 * np.max(np.abs(np.gradient(upper, P.grid.x))) + 5, u0, upper)
    rep = minimal_solution(T, P.with_lam(2.0))
    assert rep.converged
    assert np.max(np.abs(rep.solution - lower)) < 1e-7


def test_minimal_solution_precondition():
    P = coercive()
    with pytest.raises(PreconditionError):
        minimal_solution(Truncation(50.0, np.full(P.grid.size, 5.0), np.full(P.grid.size, 6.0)), P)


def test_strictly_below_examples():
    g = build_interval_grid(0.0, 1.0, 32)
    v = g.x * (1 - g.x)
    assert strictly_below(np.zeros(g.size), v, g)
    assert not strictly_below(v, v, g)
    assert strictly_below(v - 0.1, v, g)


@given(a=st.floats(-2, 2), b=st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_strictly_below_is_asymmetric(a, b):
    g = build_interval_grid(0.0, 1.0, 16)
    u, v = a * np.sin(np.pi * g.x), b * np.sin(np.pi * g.x)
    assert not (strictly_below(u, v, g) and strictly_below(v, u, g))
    assert strictly_below(u, v, g) == (a < b)
