from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qgrowth.calculus import gradient_centered
from qgrowth.errors import DomainError, SaturationError, UnsupportedReductionError, ValidationError
from qgrowth.mesh import build_interval_grid
from qgrowth.operators import Ellipticity, MatrixField, OperatorSpec, ProblemSpec
from qgrowth.transforms import ExpChange, forward, inverse, sandwich_check, semilinear_reduction
from qgrowth.verify import model_problem

V1, W1 = ExpChange(1.0, "v"), ExpChange(1.0, "w")


def test_zero_is_fixed():
    for ch in (V1, W1):
        assert np.all(forward(np.zeros(5), ch) == 0)
        assert np.all(inverse(np.zeros(5), ch) == 0)


def test_v_change_of_log_two():
    assert forward(np.log(2.0), V1) == pytest.approx(1.0, abs=1e-15)


def test_bad_parameters():
    with pytest.raises(ValidationError):
        ExpChange(0.0)
    with pytest.raises(ValidationError):
        ExpChange(1.0, "z")


def test_w_inverse_at_range_edge():
    t = np.array([0.0, 0.1, 1.0 / 3.0])
    with pytest.raises(DomainError) as info:
        inverse(t, ExpChange(3.0, "w"))
    assert info.value.node == 2


def test_forward_saturation():
    with pytest.raises(SaturationError):
        forward(np.array([0.0, 1e4]), V1)


@given(u=arrays(float, 20, elements=st.floats(-2, 2)), m=st.floats(0.1, 2),
       direction=st.sampled_from(["v", "w"]))
@settings(max_examples=50, deadline=None)
def test_round_trip(u, m, direction):
    # |m u| <= 4 keeps 1 +- m t away from zero, where the inverse loses digits
    ch = ExpChange(m, direction)
    np.testing.assert_allclose(inverse(forward(u, ch), ch), u, rtol=0, atol=1e-12)


def test_gradient_identity_second_order():
    errs = []
    for n in (64, 128, 256):
        g = build_interval_grid(0.0, 1.0, n)
        u = np.sin(2 * g.x) + g.x**2
        v = forward(u, V1)
        lhs = gradient_centered(g, v)[:, 0]
        rhs = (1 + v[g.interior]) * gradient_centered(g, u)[:, 0]
        errs.append(np.max(np.abs(lhs - rhs)))
    assert np.all(np.log2(np.array(errs[:-1]) / errs[1:]) > 1.8)


def test_sandwich_constant_has_no_violation():
    g = build_interval_grid(0.0, 1.0, 16)
    for ch in (V1, W1):
        assert sandwich_check(g, np.full(g.size, 0.3), ch, Ellipticity(1.0, 2.0)).max_violation == 0


def test_sandwich_violation_second_order():
    viol = []
    for n in (64, 128, 256):
        g = build_interval_grid(0.0, 1.0, n)
        viol.append(sandwich_check(g, np.sin(np.pi * g.x), V1, Ellipticity(1.0, 2.0)).max_violation)
    assert viol[0] > 0
    assert np.all(np.log2(np.array(viol[:-1]) / viol[1:]) > 1.8)


def test_sandwich_collapses_for_equal_constants():
    gaps = []
    for n in (64, 128):
        g = build_interval_grid(0.0, 1.0, n)
        rep = sandwich_check(g, np.sin(np.pi * g.x), W1, Ellipticity(1.0, 1.0))
        gaps.append(max(abs(rep.lower_gap), abs(rep.upper_gap)))
    assert gaps[1] < 0.3 * gaps[0]


def test_reduced_rhs_examples():
    red = semilinear_reduction(model_problem(16, h=0.0))
    assert np.all(red.rhs(np.zeros(red.grid.size)) == 0)
    # m = 1 and lam = m: at a node where 1 + m v = e the logarithm term is c e ln e = e
    red = semilinear_reduction(model_problem(16, h=0.0, lam=1.0))
    v = np.full(red.grid.size, np.e - 1)
    np.testing.assert_allclose(red.rhs(v), np.e)


def test_reduction_requires_isotropic_constant_M():
    g = build_interval_grid(0.0, 1.0, 8)
    M = MatrixField(1.0 + 0.5 * g.x, 1.0, 1.5)
    P = ProblemSpec(g, OperatorSpec("pucci_plus", Ellipticity(1, 1)), M, 1.0, 1.0)
    with pytest.raises(UnsupportedReductionError):
        semilinear_reduction(P)
    P = ProblemSpec(g, OperatorSpec("pucci_plus", Ellipticity(1, 2)), MatrixField.scalar(1.0),
                    1.0, 1.0)
    with pytest.raises(UnsupportedReductionError):
        semilinear_reduction(P)
