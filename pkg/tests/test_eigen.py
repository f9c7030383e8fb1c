from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from qgrowth.eigen import principal_eigenpair, simplicity_check
from qgrowth.mesh import build_interval_grid, build_planar_grid
from qgrowth.operators import Ellipticity, OperatorSpec, apply_F

E1 = Ellipticity(1.0, 1.0)
OP = OperatorSpec("pucci_minus", E1)


def test_matches_dense_tridiagonal_eigensolve():
    g = build_interval_grid(0.0, 1.0, 128)
    pair = principal_eigenpair(OP, 1.0, g, tol=1e-11)
    m = g.n_interior
    w = eigh_tridiagonal(np.full(m, 2.0 / g.h**2), np.full(m - 1, -1.0 / g.h**2),
                         eigvals_only=True, select="i", select_range=(0, 0))[0]
    assert abs(pair.lambda1 - w) < 1e-8
    assert abs(pair.lambda1 - 4 / g.h**2 * np.sin(np.pi * g.h / 2) ** 2) < 1e-8
    phi = np.sin(np.pi * g.x)
    assert np.max(np.abs(pair.phi1 - phi)) < 1e-8


def test_weight_scaling_keeps_the_eigenfunction():
    g = build_interval_grid(0.0, 1.0, 64)
    a = principal_eigenpair(OP, 1.0, g, tol=1e-11)
    b = principal_eigenpair(OP, 2.0, g, tol=1e-11)
    assert abs(b.lambda1 - a.lambda1 / 2) < 1e-9
    assert np.max(np.abs(a.phi1 - b.phi1)) < 1e-9


def test_postcondition_with_large_drift():
    g = build_interval_grid(0.0, 1.0, 64)
    op = OperatorSpec("pucci_minus", Ellipticity(1.0, 2.0), b=20.0)
    pair = principal_eigenpair(op, 1.0, g, tol=1e-9)
    assert pair.converged
    r = apply_F(op, g, pair.phi1) + pair.lambda1 * pair.phi1[g.interior]
    assert np.max(np.abs(r)) <= pair.effective_tol
    lo, hi = pair.bounds
    assert lo - 1e-6 <= pair.lambda1 <= hi + 1e-6
    assert np.all(pair.phi1[g.interior] > 0)


def test_planar_pucci_eigenpair():
    g = build_planar_grid("rectangle", (0, 1, 0, 1), 24)
    pair = principal_eigenpair(OperatorSpec("pucci_minus", Ellipticity(1.0, 2.0)), 1.0, g)
    assert pair.converged and np.all(pair.phi1[g.interior] > 0)
    # M^-(X) <= Lam tr X, so lambda1 is at least Lam times the discrete laplacian value
    lap = 2 * 4 / g.h**2 * np.sin(np.pi * g.h / 2) ** 2
    assert 2.0 * lap - 1e-8 <= pair.lambda1 < 1.2 * 2.0 * lap


def test_simplicity_exact_multiple():
    g = build_interval_grid(0.0, 1.0, 64)
    pair = principal_eigenpair(OP, 1.0, g, tol=1e-11)
    rep = simplicity_check(3 * pair.phi1, pair.phi1, pair.lambda1, g, OP, tol=1e-7)
    assert rep.precondition_ok
    assert abs(rep.t - 3) < 1e-9 and rep.deviation < 1e-9


def test_simplicity_gate():
    g = build_interval_grid(0.0, 1.0, 64)
    pair = principal_eigenpair(OP, 1.0, g, tol=1e-11)
    bad = pair.phi1 - 0.5 * np.sin(2 * np.pi * g.x) ** 2
    rep = simplicity_check(pair.phi1, bad, pair.lambda1, g, OP, tol=1e-7)
    assert not rep.precondition_ok and "subsolution" in rep.message


def test_two_starts_are_proportional():
    g = build_interval_grid(0.0, 1.0, 64)
    tol = 1e-10
    a = principal_eigenpair(OP, 1.0, g, tol=tol)
    b = principal_eigenpair(OP, 1.0, g, tol=tol, seed=g.x**3 * (1 - g.x))
    rep = simplicity_check(a.phi1, b.phi1, 0.5 * (a.lambda1 + b.lambda1), g, OP, tol=1e-6)
    assert rep.precondition_ok and rep.deviation < 10 * tol
