"""Finite-difference stencils: gradients, Hessians and the radial Hessian spectrum.

All difference operators are sparse matrices of shape ``(n_interior, N)`` so
that ``D @ u`` evaluates the stencil at interior nodes of a full grid function
and the same matrix serves as an exact Jacobian block.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError
from .mesh import Grid


@dataclass(frozen=True)
class Stencils:
    """Difference matrices of one grid.

    ``forward[k] @ u`` is ``(u(x + h e_k) - u(x)) / h`` and ``backward[k] @ u`` is
    ``(u(x) - u(x - h e_k)) / h``; ``delta_plus``/``delta_minus`` are the same
    differences without the division by ``h``.  ``second[(k, l)]`` is the
    centered second difference (four-point average for ``k != l``).
    """

    restrict: sp.csr_matrix
    centered: tuple[sp.csr_matrix, ...]
    forward: tuple[sp.csr_matrix, ...]
    backward: tuple[sp.csr_matrix, ...]
    delta_plus: tuple[sp.csr_matrix, ...]
    delta_minus: tuple[sp.csr_matrix, ...]
    second: dict[tuple[int, int], sp.csr_matrix]


_CACHE: "weakref.WeakKeyDictionary[Grid, Stencils]" = weakref.WeakKeyDictionary()


def _unit(dim: int, k: int, sign: int = 1) -> tuple[int, ...]:
    off = [0] * dim
    off[k] = sign
    return tuple(off)


def stencils(grid: Grid) -> Stencils:
    """Return (and memoize) the difference matrices of ``grid``."""
    cached = _CACHE.get(grid)
    if cached is not None:
        return cached
    m, N, dim = grid.n_interior, grid.size, grid.dim
    rows = np.arange(m)
    own = grid.interior

    def mat(cols_vals):
        r, c, v = [], [], []
        for cols, val in cols_vals:
            r.append(rows)
            c.append(cols)
            v.append(np.full(m, val))
        return sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                             shape=(m, N))

    restrict = mat([(own, 1.0)])
    centered, forward, backward, dplus, dminus = [], [], [], [], []
    second: dict[tuple[int, int], sp.csr_matrix] = {}
    for k in range(dim):
        hk = grid.spacing[k]
        up = grid.neighbors[_unit(dim, k, 1)]
        dn = grid.neighbors[_unit(dim, k, -1)]
        centered.append(mat([(up, 0.5 / hk), (dn, -0.5 / hk)]))
        dplus.append(mat([(up, 1.0), (own, -1.0)]))
        dminus.append(mat([(dn, 1.0), (own, -1.0)]))
        forward.append(dplus[-1] / hk)
        backward.append(-dminus[-1] / hk)
        second[(k, k)] = mat([(up, 1.0 / hk**2), (own, -2.0 / hk**2), (dn, 1.0 / hk**2)])
    for k in range(dim):
        for l in range(k + 1, dim):
            hk, hl = grid.spacing[k], grid.spacing[l]

            def nb(sk, sl):
                off = [0] * dim
                off[k], off[l] = sk, sl
                return grid.neighbors[tuple(off)]

            w = 1.0 / (4.0 * hk * hl)
            D = mat([(nb(1, 1), w), (nb(-1, -1), w), (nb(1, -1), -w), (nb(-1, 1), -w)])
            second[(k, l)] = second[(l, k)] = D
    st = Stencils(restrict=restrict, centered=tuple(centered), forward=tuple(forward),
                  backward=tuple(backward), delta_plus=tuple(dplus), delta_minus=tuple(dminus),
                  second=second)
    _CACHE[grid] = st
    return st


def _check(grid: Grid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError(f"grid function must have length {grid.size}, got shape {u.shape}")
    return u


def gradient_centered(grid: Grid, u) -> np.ndarray:
    """Centered gradient at interior nodes, shape ``(n_interior, dim)``."""
    u = _check(grid, u)
    st = stencils(grid)
    return np.column_stack([D @ u for D in st.centered])


def hessian_centered(grid: Grid, u) -> np.ndarray:
    """Centered Hessian at interior nodes, shape ``(n_interior, dim, dim)``."""
    u = _check(grid, u)
    st = stencils(grid)
    d = grid.dim
    H = np.empty((grid.n_interior, d, d))
    for k in range(d):
        for l in range(k, d):
            H[:, k, l] = H[:, l, k] = st.second[(k, l)] @ u
    return H


def one_sided(grid: Grid, u) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward differences at interior nodes, each ``(n_interior, dim)``."""
    u = _check(grid, u)
    st = stencils(grid)
    fwd = np.column_stack([D @ u for D in st.forward])
    bwd = np.column_stack([D @ u for D in st.backward])
    return fwd, bwd


def radial_hessian_spectrum(phi_prime: float, phi_second: float, r: float, n: int) -> np.ndarray:
    """Eigenvalues of the Hessian of ``x -> phi(|x|)`` in R^n at radius ``r``.

    Returns ``phi'(r)/r`` repeated ``n - 1`` times followed by ``phi''(r)``.
    """
    if not r > 0:
        raise DomainError(f"radial Hessian undefined at r={r}")
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    return np.array([phi_prime / r] * (int(n) - 1) + [phi_second], dtype=float)
