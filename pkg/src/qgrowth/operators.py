"""Pucci extremal operators, operator families F, the quadratic gradient term and the residual.

Every discrete second-order operator here is piecewise linear and positively
homogeneous in ``u``: on each piece it is a fixed sparse matrix.  The routine
:func:`linearize_F` returns that matrix together with the selected piece
("policy"), so ``values == jac @ u`` holds exactly.  Policy iteration and
semismooth Newton both build on this.

Discretization choices:

* second derivatives use centered differences (four-point cross term in 2D);
* the drift ``b . Du`` of linear members and the ``+-b|Du|`` bound terms of the
  Pucci kinds are upwinded, which keeps the 1D schemes monotone;
* the quadratic term has two variants.  ``"centered"`` evaluates
  ``<M Du, Du>`` with centered gradients.  ``"fitted"`` (the default) uses the
  exponentially fitted form ``(lam_P/h^2) sum_{+-} (exp(m d) - 1 - m d)/m`` per
  axis with ``m = M_kk/lam_P`` and one-sided differences ``d``.  It is second
  order, nonnegative, and keeps the full scheme monotone.  For ``F = Laplacian``
  it is the exact discrete image of the exponential change of variables.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .calculus import gradient_centered, hessian_centered, stencils
from .errors import DomainError, SaturationError, ValidationError
from .mesh import Grid

logger = logging.getLogger(__name__)

KINDS = ("pucci_plus", "pucci_minus", "linear", "hjb_sup", "isaacs")
QUADRATIC_SCHEMES = ("fitted", "centered")
EXP_LIMIT = 700.0
_SYM_TOL = 1e-10


# ---------------------------------------------------------------------------
# Pucci operators on matrices


@dataclass(frozen=True)
class Ellipticity:
    """Ellipticity constants ``0 < lam <= Lam``."""

    lam: float
    Lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and np.isfinite(self.Lam)) or not 0 < self.lam <= self.Lam:
            raise ValidationError(f"ellipticity needs 0 < lam_P <= Lam_P, got ({self.lam}, {self.Lam})")


def _symmetric_eigs(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim < 2 or X.shape[-1] != X.shape[-2]:
        raise DomainError(f"expected square matrices, got shape {X.shape}")
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if np.max(np.abs(X - np.swapaxes(X, -1, -2)), initial=0.0) > _SYM_TOL * scale:
        raise DomainError("Pucci operators require symmetric matrices")
    return np.linalg.eigvalsh(X)


def pucci_plus(X, E: Ellipticity):
    """Maximal Pucci operator: ``Lam * sum(e+) - lam * sum(e-)`` over eigenvalues ``e``.

    Accepts a single matrix or a stack ``(..., d, d)``.
    """
    e = _symmetric_eigs(X)
    out = E.Lam * np.sum(np.clip(e, 0, None), axis=-1) + E.lam * np.sum(np.clip(e, None, 0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def pucci_minus(X, E: Ellipticity):
    """Minimal Pucci operator: ``lam * sum(e+) - Lam * sum(e-)``."""
    e = _symmetric_eigs(X)
    out = E.lam * np.sum(np.clip(e, 0, None), axis=-1) + E.Lam * np.sum(np.clip(e, None, 0), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Coefficient containers


def _as_matrix_field(a, dim: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # per-node scalar coefficient in 1D
        a = a.reshape(-1, 1, 1)
    return a


def _node_rows(arr: np.ndarray, grid: Grid, trailing: int) -> np.ndarray:
    """Interior rows of a coefficient that is either constant or given per node."""
    if arr.ndim == trailing:
        return np.broadcast_to(arr, (grid.n_interior,) + arr.shape)
    if arr.shape[0] != grid.size:
        raise ValidationError(f"coefficient has {arr.shape[0]} node values, grid has {grid.size}")
    return arr[grid.interior]


def _node_scalar(value, grid: Grid) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.n_interior, float(arr))
    if arr.shape != (grid.size,):
        raise ValidationError(f"scalar field must have {grid.size} node values, got {arr.shape}")
    return arr[grid.interior]


@dataclass(frozen=True, eq=False)
class LinearMember:
    """One linear operator ``tr(a D^2u) + drift . Du + zero * u``.

    ``a`` is a constant ``(d, d)`` matrix (a scalar in 1D) or a per-node stack;
    ``drift`` a constant vector or per-node ``(N, d)``; ``zero`` a scalar or
    per-node array and must be ``<= 0``.
    """

    a: np.ndarray
    drift: np.ndarray | None = None
    zero: np.ndarray | float | None = None

    def __post_init__(self):
        object.__setattr__(self, "a", _as_matrix_field(self.a))
        if self.drift is not None:
            d = np.asarray(self.drift, dtype=float)
            if d.ndim == 0:
                d = d.reshape(1)
            object.__setattr__(self, "drift", d)
        if self.zero is not None:
            object.__setattr__(self, "zero", np.asarray(self.zero, dtype=float))

    @property
    def dim(self) -> int:
        return self.a.shape[-1]


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Discrete elliptic operator F.

    ``members`` is a sequence of :class:`LinearMember` for the ``linear`` and
    ``hjb_sup`` kinds and a sequence of sequences for ``isaacs`` (outer sup over
    groups, inner inf within a group).  ``b`` and ``d`` are the drift and
    zero-order bounds; for the Pucci kinds they enter as ``+-b|Du| - d u``.
    ``stencil`` selects the 2D Pucci discretization: ``"eigen"`` (pointwise
    eigen-decomposition of the discrete Hessian) or ``"rotated"`` (best of the
    axis frame and the diagonal frame, consistent only for Hessians aligned
    with one of them; meant for robustness experiments).
    """

    kind: str
    ellipticity: Ellipticity
    members: tuple = ()
    b: float | np.ndarray = 0.0
    d: float | np.ndarray = 0.0
    stencil: str = "eigen"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.stencil not in ("eigen", "rotated"):
            raise ValidationError(f"unknown Pucci stencil {self.stencil!r}")
        if np.any(np.asarray(self.b) < 0) or np.any(np.asarray(self.d) < 0):
            raise ValidationError("drift bound b and zero-order bound d must be nonnegative")
        if self.kind == "isaacs":
            groups = tuple(tuple(g) for g in self.members)
            if not groups or any(len(g) == 0 for g in groups):
                raise ValidationError("isaacs operator needs non-empty groups of members")
            object.__setattr__(self, "members", groups)
            flat = [m for g in groups for m in g]
        else:
            object.__setattr__(self, "members", tuple(self.members))
            flat = list(self.members)
            if self.kind == "linear" and len(flat) != 1:
                raise ValidationError("linear operator needs exactly one member")
            if self.kind == "hjb_sup" and not flat:
                raise ValidationError("hjb_sup operator needs a non-empty family")
        for m in flat:
            self._validate_member(m)

    def _validate_member(self, m: LinearMember) -> None:
        E = self.ellipticity
        a = m.a if m.a.ndim == 3 else m.a[None]
        if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > _SYM_TOL * max(1.0, np.max(np.abs(a))):
            raise ValidationError("member diffusion matrix is not symmetric")
        e = np.linalg.eigvalsh(a)
        slack = 1e-12 * E.Lam
        if e.min() < E.lam - slack or e.max() > E.Lam + slack:
            raise ValidationError(
                f"member diffusion eigenvalues [{e.min():.6g}, {e.max():.6g}] violate "
                f"ellipticity [{E.lam}, {E.Lam}]")
        bmax = float(np.max(np.asarray(self.b)))
        if m.drift is not None:
            dr = m.drift if m.drift.ndim == 2 else m.drift[None]
            if np.max(np.linalg.norm(dr, axis=-1)) > bmax * (1 + 1e-12) + 1e-15:
                raise ValidationError(f"member drift exceeds the drift bound b={bmax}")
        if m.zero is not None:
            z = np.asarray(m.zero)
            if np.any(z > 0):
                raise ValidationError("member zero-order coefficient must be <= 0 (proper operator)")
            if np.any(-z > float(np.max(np.asarray(self.d))) * (1 + 1e-12) + 1e-15):
                raise ValidationError("member zero-order coefficient exceeds the bound d")

    @property
    def flat_members(self) -> list[LinearMember]:
        if self.kind == "isaacs":
            return [m for g in self.members for m in g]
        return list(self.members)


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Symmetric matrix field ``M(x)`` with ``mu1 I <= M <= mu2 I``."""

    values: np.ndarray
    mu1: float
    mu2: float

    def __post_init__(self):
        object.__setattr__(self, "values", _as_matrix_field(self.values))
        if not (np.isfinite(self.mu1) and np.isfinite(self.mu2)) or not 0 < self.mu1 <= self.mu2:
            raise ValidationError(f"matrix field needs 0 < mu1 <= mu2, got ({self.mu1}, {self.mu2})")
        v = self.values if self.values.ndim == 3 else self.values[None]
        if np.max(np.abs(v - np.swapaxes(v, -1, -2))) > _SYM_TOL * max(1.0, np.max(np.abs(v))):
            raise ValidationError("matrix field M is not symmetric")
        e = np.linalg.eigvalsh(v)
        slack = 1e-12 * self.mu2
        if e.min() < self.mu1 - slack or e.max() > self.mu2 + slack:
            raise ValidationError(
                f"M eigenvalues [{e.min():.6g}, {e.max():.6g}] violate [mu1, mu2] = [{self.mu1}, {self.mu2}]")

    @classmethod
    def scalar(cls, mu: float, dim: int = 1) -> "MatrixField":
        return cls(mu * np.eye(dim), mu, mu)

    @property
    def is_constant_scalar(self) -> bool:
        v = self.values
        if v.ndim == 3:
            if not np.allclose(v, v[0], rtol=0, atol=1e-14):
                return False
            v = v[0]
        return bool(np.allclose(v, v[0, 0] * np.eye(v.shape[0]), rtol=0, atol=1e-14))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Coefficients of ``-F[u] = lam c u + <M Du, Du> + h`` with ``u = 0`` on the boundary.

    ``c_fn``/``h_fn`` optionally keep the closed-form coefficients so that
    reference solvers can resample them on finer grids.
    """

    grid: Grid
    operator: OperatorSpec
    M: MatrixField
    c: np.ndarray
    h: np.ndarray
    lam: float = 0.0
    quadratic_scheme: str = "fitted"
    c_fn: Callable | None = None
    h_fn: Callable | None = None

    def __post_init__(self):
        g = self.grid
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (g.size,)).copy()
        h = np.broadcast_to(np.asarray(self.h, dtype=float), (g.size,)).copy()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h", h)
        if np.any(c < 0) or not np.any(c[g.interior] > 0):
            raise ValidationError("c must be nonnegative and positive somewhere in the interior")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(h))):
            raise ValidationError("c and h must be finite")
        if self.quadratic_scheme not in QUADRATIC_SCHEMES:
            raise ValidationError(f"unknown quadratic scheme {self.quadratic_scheme!r}")
        if self.M.values.shape[-1] != g.dim:
            raise ValidationError("matrix field dimension does not match the grid")

    @classmethod
    def from_functions(cls, grid: Grid, operator: OperatorSpec, M: MatrixField, c_fn, h_fn,
                       lam: float = 0.0, quadratic_scheme: str = "fitted") -> "ProblemSpec":
        return cls(grid, operator, M, grid.evaluate(c_fn), grid.evaluate(h_fn), lam,
                   quadratic_scheme, c_fn, h_fn)

    def with_lam(self, lam: float) -> "ProblemSpec":
        return dataclasses.replace(self, lam=float(lam))

    def with_h(self, h, h_fn=None) -> "ProblemSpec":
        return dataclasses.replace(self, h=np.asarray(h, dtype=float), h_fn=h_fn)

    @property
    def lam_P(self) -> float:
        return self.operator.ellipticity.lam


# ---------------------------------------------------------------------------
# Operator application


class Linearization(NamedTuple):
    """Values at interior nodes, the active sparse matrix and the policy code per node."""

    values: np.ndarray
    jac: sp.csr_matrix
    policy: np.ndarray


def _member_matrix(spec: OperatorSpec, member: LinearMember, grid: Grid) -> sp.csr_matrix:
    key = (id(grid), id(member))
    hit = spec._cache.get(key)
    if hit is not None and hit[0]() is grid:
        return hit[1]
    import weakref

    st = stencils(grid)
    dim = grid.dim
    if member.dim != dim:
        raise ValidationError(f"member is {member.dim}D but the grid is {dim}D")
    A = _node_rows(member.a, grid, 2)
    J = sp.csr_matrix((grid.n_interior, grid.size))
    for k in range(dim):
        J = J + sp.diags(A[:, k, k]) @ st.second[(k, k)]
        for l in range(k + 1, dim):
            J = J + sp.diags(2.0 * A[:, k, l]) @ st.second[(k, l)]
    if member.drift is not None:
        B = _node_rows(member.drift, grid, 1)
        for k in range(dim):
            J = J + sp.diags(np.clip(B[:, k], 0, None)) @ st.forward[k]
            J = J + sp.diags(np.clip(B[:, k], None, 0)) @ st.backward[k]
    if member.zero is not None:
        J = J + sp.diags(_node_scalar(member.zero, grid)) @ st.restrict
    J = sp.csr_matrix(J)
    spec._cache[key] = (weakref.ref(grid), J)
    return J


def _select_rows(mats: Sequence[sp.csr_matrix], choice: np.ndarray) -> sp.csr_matrix:
    out = None
    for j, L in enumerate(mats):
        part = sp.diags((choice == j).astype(float)) @ L
        out = part if out is None else out + part
    return sp.csr_matrix(out)


def _gradient_bound_term(grid: Grid, u: np.ndarray, sign: int, b: np.ndarray):
    """Upwinded ``sign * b |Du|``: values, matrix and a policy code."""
    st = stencils(grid)
    m = grid.n_interior
    comps, mats, codes = [], [], np.zeros(m, dtype=np.int64)
    for k in range(grid.dim):
        f = st.forward[k] @ u
        g = -(st.backward[k] @ u)
        cand = np.column_stack([f, g, np.zeros(m)])
        pick = np.argmax(cand, axis=1) if sign > 0 else np.argmin(cand, axis=1)
        comps.append(cand[np.arange(m), pick])
        mats.append(sp.diags((pick == 0).astype(float)) @ st.forward[k]
                    - sp.diags((pick == 1).astype(float)) @ st.backward[k])
        codes = codes * 3 + pick
    if grid.dim == 1:
        jac = sp.diags(b) @ mats[0]
    else:
        G = np.column_stack(comps)
        norm = np.linalg.norm(G, axis=1)
        safe = np.where(norm > 0, norm, 1.0)
        jac = None
        for k in range(grid.dim):
            # d|g| = sum_k (g_k/|g|) dg_k, and |g| = sum_k g_k^2/|g| keeps values == jac @ u
            w = np.where(norm > 0, sign * b * G[:, k] / safe, 0.0)
            term = sp.diags(w) @ mats[k]
            jac = term if jac is None else jac + term
    return sp.csr_matrix(jac), codes


def _pucci_linearization(spec: OperatorSpec, grid: Grid, u: np.ndarray, sign: int) -> Linearization:
    E = spec.ellipticity
    st = stencils(grid)
    m = grid.n_interior
    hi, lo = (E.Lam, E.lam) if sign > 0 else (E.lam, E.Lam)
    if grid.dim == 1:
        s = st.second[(0, 0)] @ u
        pos = s >= 0
        jac = sp.diags(np.where(pos, hi, lo)) @ st.second[(0, 0)]
        policy = pos.astype(np.int64)
    elif spec.stencil == "eigen":
        H = hessian_centered(grid, u)
        w, V = np.linalg.eigh(H)
        theta = np.where(w >= 0, hi, lo)
        A = np.einsum("nik,nk,njk->nij", V, theta, V)
        jac = sp.diags(A[:, 0, 0]) @ st.second[(0, 0)] + sp.diags(A[:, 1, 1]) @ st.second[(1, 1)] \
            + sp.diags(2.0 * A[:, 0, 1]) @ st.second[(0, 1)]
        policy = (w[:, 0] >= 0).astype(np.int64) * 2 + (w[:, 1] >= 0)
    else:
        jac, policy = _rotated_pucci(grid, u, hi, lo, sign)
    bvals = _node_scalar(spec.b, grid)
    if np.any(bvals > 0):
        gj, gcodes = _gradient_bound_term(grid, u, sign, bvals)
        jac = jac + gj
        policy = policy * 3 ** grid.dim + gcodes
    dvals = _node_scalar(spec.d, grid)
    if np.any(dvals > 0):
        jac = jac - sp.diags(dvals) @ st.restrict
    jac = sp.csr_matrix(jac)
    return Linearization(jac @ u, jac, policy)


def _rotated_pucci(grid: Grid, u: np.ndarray, hi: float, lo: float, sign: int):
    st = stencils(grid)
    hx, hy = grid.spacing
    if abs(hx - hy) > 1e-12 * hx:
        raise ValidationError("rotated Pucci stencil needs equal spacing on both axes")
    own = st.restrict
    n = grid.n_interior
    rows = np.arange(n)

    def directional(o1, o2):
        p = grid.neighbors[o1]
        q = grid.neighbors[o2]
        D = sp.csr_matrix((np.full(2 * n, 1.0 / (2 * hx * hx)), (np.r_[rows, rows], np.r_[p, q])),
                          shape=(n, grid.size))
        return D - own / (hx * hx)

    frames = [(st.second[(0, 0)], st.second[(1, 1)]),
              (directional((1, 1), (-1, -1)), directional((1, -1), (-1, 1)))]
    vals, mats, pols = [], [], []
    for D1, D2 in frames:
        s1, s2 = D1 @ u, D2 @ u
        t1, t2 = np.where(s1 >= 0, hi, lo), np.where(s2 >= 0, hi, lo)
        vals.append(t1 * s1 + t2 * s2)
        mats.append(sp.diags(t1) @ D1 + sp.diags(t2) @ D2)
        pols.append((s1 >= 0).astype(np.int64) * 2 + (s2 >= 0))
    V = np.column_stack(vals)
    pick = np.argmax(V, axis=1) if sign > 0 else np.argmin(V, axis=1)
    jac = _select_rows(mats, pick)
    policy = pick * 4 + np.where(pick == 0, pols[0], pols[1])
    return jac, policy


def linearize_F(spec: OperatorSpec, grid: Grid, u) -> Linearization:
    """Evaluate the discrete operator and the matrix of its active piece."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.size,):
        raise ValueError(f"grid function must have length {grid.size}")
    if spec.kind == "pucci_plus":
        return _pucci_linearization(spec, grid, u, +1)
    if spec.kind == "pucci_minus":
        return _pucci_linearization(spec, grid, u, -1)
    if spec.kind == "linear":
        L = _member_matrix(spec, spec.members[0], grid)
        return Linearization(L @ u, L, np.zeros(grid.n_interior, dtype=np.int64))
    if spec.kind == "hjb_sup":
        mats = [_member_matrix(spec, m, grid) for m in spec.members]
        vals = np.column_stack([L @ u for L in mats])
        pick = np.argmax(vals, axis=1)
        jac = _select_rows(mats, pick)
        return Linearization(jac @ u, jac, pick.astype(np.int64))
    # isaacs: sup over groups of inf over members
    group_jacs, group_vals, inner = [], [], []
    width = max(len(g) for g in spec.members)
    for g in spec.members:
        mats = [_member_matrix(spec, m, grid) for m in g]
        vals = np.column_stack([L @ u for L in mats])
        pick = np.argmin(vals, axis=1)
        inner.append(pick)
        group_jacs.append(_select_rows(mats, pick))
        group_vals.append(vals[np.arange(grid.n_interior), pick])
    outer = np.argmax(np.column_stack(group_vals), axis=1)
    jac = _select_rows(group_jacs, outer)
    policy = outer * width + np.column_stack(inner)[np.arange(grid.n_interior), outer]
    return Linearization(jac @ u, jac, policy.astype(np.int64))


def apply_F(spec: OperatorSpec, grid: Grid, u) -> np.ndarray:
    """Discrete ``F[u]`` at interior nodes."""
    return linearize_F(spec, grid, u).values


def extremal_L(grid: Grid, u, sign: int, E: Ellipticity, b=0.0) -> np.ndarray:
    """``M^+-(D^2u) +- b|Du|`` at interior nodes, with upwinded ``|Du|``."""
    kind = "pucci_plus" if sign > 0 else "pucci_minus"
    return apply_F(OperatorSpec(kind, E, b=b), grid, u)


# ---------------------------------------------------------------------------
# Quadratic gradient term and residual


def quadratic_term(grid: Grid, M: MatrixField, u, lam_P: float,
                   scheme: str = "fitted") -> tuple[np.ndarray, sp.csr_matrix]:
    """Discrete ``<M Du, Du>`` at interior nodes and its Jacobian.

    Raises :class:`SaturationError` when an exponent of the fitted form would
    exceed the overflow guard.
    """
    u = np.asarray(u, dtype=float)
    st = stencils(grid)
    dim = grid.dim
    Mv = _node_rows(M.values, grid, 2)
    n = grid.n_interior
    if scheme == "centered":
        g = gradient_centered(grid, u)
        Mg = np.einsum("nij,nj->ni", Mv, g)
        vals = np.einsum("ni,ni->n", Mg, g)
        jac = None
        for k in range(dim):
            t = sp.diags(2.0 * Mg[:, k]) @ st.centered[k]
            jac = t if jac is None else jac + t
        return vals, sp.csr_matrix(jac)
    if scheme != "fitted":
        raise ValidationError(f"unknown quadratic scheme {scheme!r}")
    vals = np.zeros(n)
    jac = sp.csr_matrix((n, grid.size))
    for k in range(dim):
        mk = Mv[:, k, k] / lam_P
        w = lam_P / grid.spacing[k] ** 2
        for D in (st.delta_plus[k], st.delta_minus[k]):
            a = mk * (D @ u)
            if np.max(a, initial=-np.inf) > EXP_LIMIT:
                node = int(grid.interior[np.argmax(a)])
                raise SaturationError(f"fitted quadratic term saturates (exponent {np.max(a):.4g})", node)
            e = np.expm1(a)
            vals += w * (e - a) / mk
            jac = jac + sp.diags(w * e) @ D
    if dim > 1:
        g = gradient_centered(grid, u)
        for k in range(dim):
            for l in range(k + 1, dim):
                vals += 2.0 * Mv[:, k, l] * g[:, k] * g[:, l]
                jac = jac + sp.diags(2.0 * Mv[:, k, l] * g[:, l]) @ st.centered[k] \
                    + sp.diags(2.0 * Mv[:, k, l] * g[:, k]) @ st.centered[l]
    return vals, sp.csr_matrix(jac)


def residual_P(u, P: ProblemSpec) -> np.ndarray:
    """Full residual: ``F[u] + lam c u + Q[u] + h`` inside, ``u`` on the boundary."""
    u = np.asarray(u, dtype=float)
    g = P.grid
    out = u.copy()
    q, _ = quadratic_term(g, P.M, u, P.lam_P, P.quadratic_scheme)
    out[g.interior] = apply_F(P.operator, g, u) + P.lam * P.c[g.interior] * u[g.interior] \
        + q + P.h[g.interior]
    return out


class SystemLinearization(NamedTuple):
    """Interior residual, Jacobian in interior unknowns and scale data of the nonlinear system."""

    residual: np.ndarray
    jac: sp.csc_matrix
    dlam: np.ndarray
    scale: float


def problem_linearization(P: ProblemSpec, u) -> SystemLinearization:
    """Residual and Jacobian of ``P`` with respect to the interior values of ``u``.

    ``scale`` is the infinity norm of the residual's individual terms and is
    used to set the round-off floor for convergence tests.
    """
    u = np.asarray(u, dtype=float)
    g = P.grid
    st = stencils(g)
    lin = linearize_F(P.operator, g, u)
    q, Jq = quadratic_term(g, P.M, u, P.lam_P, P.quadratic_scheme)
    ci = P.c[g.interior]
    ui = u[g.interior]
    r = lin.values + P.lam * ci * ui + q + P.h[g.interior]
    J = lin.jac + Jq + sp.diags(P.lam * ci) @ st.restrict
    J = sp.csc_matrix(J)[:, g.interior]
    rowsum = float(abs(lin.jac).sum(axis=1).max()) if g.n_interior else 0.0
    umax = float(np.max(np.abs(u))) if u.size else 0.0
    scale = rowsum * umax + float(np.max(np.abs(q), initial=0.0)) \
        + abs(P.lam) * float(np.max(np.abs(ci * ui), initial=0.0)) + float(np.max(np.abs(P.h)))
    return SystemLinearization(r, sp.csc_matrix(J), ci * ui, scale)


def roundoff_floor(scale: float, factor: float = 16.0) -> float:
    """Smallest residual that double precision can certify for terms of size ``scale``."""
    return factor * np.finfo(float).eps * scale


def effective_tol(tol: float, scale: float) -> float:
    return max(float(tol), roundoff_floor(scale))
