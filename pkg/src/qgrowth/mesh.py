"""Uniform grids on intervals, rectangles and masked disks.

A :class:`Grid` stores only the active nodes.  Grid functions are plain
``numpy`` arrays of length ``grid.size`` indexed like ``grid.coords``; interior
operators return arrays of length ``grid.n_interior`` ordered like
``grid.interior``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

Offset = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable uniform grid with interior/boundary classification.

    Attributes
    ----------
    kind : "interval", "rectangle" or "disk".
    coords : (N, dim) node coordinates.
    spacing : mesh width per axis.
    interior, boundary : index arrays partitioning ``range(N)``.
    inward_normal : (n_boundary, dim) unit inward normals.
    inward_neighbor : index of the neighbor used for one-sided normal differences.
    inward_step : distance between a boundary node and its inward neighbor.
    distance : distance to the boundary, zero exactly on boundary nodes.
    neighbors : for every nonzero offset in {-1, 0, 1}^dim, the neighbor index of
        each interior node.
    """

    kind: str
    coords: np.ndarray
    spacing: tuple[float, ...]
    interior: np.ndarray
    boundary: np.ndarray
    inward_normal: np.ndarray
    inward_neighbor: np.ndarray
    inward_step: np.ndarray
    distance: np.ndarray
    neighbors: dict[Offset, np.ndarray]
    shape: tuple[int, ...]
    tensor_index: np.ndarray
    center: tuple[float, ...] = field(default=())
    radius: float = 0.0

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def n_interior(self) -> int:
        return self.interior.size

    @property
    def h(self) -> float:
        """Largest mesh width (the resolution scale)."""
        return max(self.spacing)

    @property
    def cell_volume(self) -> float:
        """Quadrature weight h^dim used for discrete integrals."""
        return float(np.prod(self.spacing))

    @property
    def x(self) -> np.ndarray:
        return self.coords[:, 0]

    @property
    def y(self) -> np.ndarray:
        if self.dim < 2:
            raise AttributeError("1D grid has no y coordinate")
        return self.coords[:, 1]

    @property
    def facing_interior(self) -> np.ndarray:
        """Boundary mask: the inward neighbor is an interior node.

        Staircase disks have a few boundary nodes surrounded only by other
        boundary nodes; their one-sided difference quotient is identically zero
        and carries no information about the normal derivative.
        """
        return self.is_interior_mask()[self.inward_neighbor]

    def is_interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.interior] = True
        return mask

    def centroid_node(self) -> int:
        """Interior node nearest the centroid of the domain (default probe)."""
        mid = self.coords.mean(axis=0) if self.kind != "disk" else np.asarray(self.center)
        pts = self.coords[self.interior]
        return int(self.interior[np.argmin(np.sum((pts - mid) ** 2, axis=1))])

    def nearest_node(self, point) -> int:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return int(np.argmin(np.sum((self.coords - p) ** 2, axis=1)))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.size)

    def evaluate(self, fn) -> np.ndarray:
        """Evaluate ``fn(x)`` (1D) or ``fn(x, y)`` (2D) on all nodes."""
        args = [self.coords[:, k] for k in range(self.dim)]
        return np.broadcast_to(np.asarray(fn(*args), dtype=float), (self.size,)).copy()

    def extend(self, interior_values: np.ndarray) -> np.ndarray:
        """Embed interior values into a full grid function, zero on the boundary."""
        out = np.zeros(self.size)
        out[self.interior] = interior_values
        return out


def _finish(kind, coords, spacing, active_shape, tensor_index, boundary_mask,
            inward_normal_fn, distance, center=(), radius=0.0) -> Grid:
    size = coords.shape[0]
    dim = coords.shape[1]
    lookup = -np.ones(active_shape, dtype=np.int64)
    lookup[tuple(tensor_index.T)] = np.arange(size)

    interior = np.flatnonzero(~boundary_mask)
    boundary = np.flatnonzero(boundary_mask)

    offsets = [o for o in itertools.product((-1, 0, 1), repeat=dim) if any(o)]
    neighbors: dict[Offset, np.ndarray] = {}
    for off in offsets:
        idx = tensor_index[interior] + np.asarray(off)
        inside = np.all((idx >= 0) & (idx < np.asarray(active_shape)), axis=1)
        nb = -np.ones(interior.size, dtype=np.int64)
        nb[inside] = lookup[tuple(idx[inside].T)]
        if np.any(nb < 0):
            raise ConfigurationError(f"{kind} grid has an interior node without a full stencil")
        neighbors[off] = nb

    normals = np.zeros((boundary.size, dim))
    inward = np.zeros(boundary.size, dtype=np.int64)
    steps = np.zeros(boundary.size)
    interior_mask = ~boundary_mask
    for j, b in enumerate(boundary):
        nu = inward_normal_fn(b)
        normals[j] = nu
        best, best_key = -1, None
        for off in offsets:
            idx = tensor_index[b] + np.asarray(off)
            if np.any(idx < 0) or np.any(idx >= np.asarray(active_shape)):
                continue
            nb = lookup[tuple(idx)]
            if nb < 0:
                continue
            vec = np.asarray(off) * np.asarray(spacing)
            cosine = float(vec @ nu) / float(np.linalg.norm(vec))
            key = (bool(interior_mask[nb]), round(cosine, 12), -float(np.linalg.norm(vec)))
            if best_key is None or key > best_key:
                best, best_key = int(nb), key
        if best < 0:
            raise ConfigurationError(f"{kind} boundary node {b} has no active neighbor")
        inward[j] = best
        steps[j] = float(np.linalg.norm(coords[best] - coords[b]))

    dist = np.asarray(distance, dtype=float).copy()
    dist[boundary] = 0.0
    return Grid(kind=kind, coords=coords, spacing=tuple(float(s) for s in spacing),
                interior=interior, boundary=boundary, inward_normal=normals,
                inward_neighbor=inward, inward_step=steps, distance=dist,
                neighbors=neighbors, shape=tuple(active_shape), tensor_index=tensor_index,
                center=tuple(center), radius=float(radius))


def build_interval_grid(a: float, b: float, n: int) -> Grid:
    """Uniform grid on [a, b] with ``n`` cells (``n + 1`` nodes)."""
    if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
        raise ConfigurationError(f"interval requires a < b, got a={a}, b={b}", field="grid")
    if int(n) != n or n < 3:
        raise ConfigurationError(f"interval grid needs n >= 3 cells, got {n}", field="grid.n")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    x[0], x[-1] = a, b
    coords = x[:, None]
    mask = np.zeros(n + 1, dtype=bool)
    mask[[0, -1]] = True
    distance = np.minimum(x - a, b - x)

    def normal(node):
        return np.array([1.0 if node == 0 else -1.0])

    return _finish("interval", coords, ((b - a) / n,), (n + 1,),
                   np.arange(n + 1)[:, None], mask, normal, distance)


def build_planar_grid(shape: str, extents, n: int) -> Grid:
    """Tensor grid on a rectangle or a masked disk.

    ``extents`` is ``(x0, x1, y0, y1)`` for a rectangle and ``(radius,)`` or
    ``(cx, cy, radius)`` for a disk; ``n`` is the number of cells per axis
    (across the diameter for a disk).
    """
    if int(n) != n or n < 4:
        raise ConfigurationError(f"planar grid needs n >= 4 cells per axis, got {n}", field="grid.n")
    n = int(n)
    ext = [float(e) for e in np.atleast_1d(extents)]
    if shape == "rectangle":
        if len(ext) != 4:
            raise ConfigurationError("rectangle extents must be (x0, x1, y0, y1)", field="grid.extents")
        x0, x1, y0, y1 = ext
        if not (x0 < x1 and y0 < y1):
            raise ConfigurationError(f"degenerate rectangle {ext}", field="grid.extents")
        xs, ys = np.linspace(x0, x1, n + 1), np.linspace(y0, y1, n + 1)
        I, J = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        tindex = np.column_stack([I.ravel(), J.ravel()])
        coords = np.column_stack([xs[tindex[:, 0]], ys[tindex[:, 1]]])
        mask = (tindex[:, 0] == 0) | (tindex[:, 0] == n) | (tindex[:, 1] == 0) | (tindex[:, 1] == n)
        distance = np.minimum.reduce([coords[:, 0] - x0, x1 - coords[:, 0],
                                      coords[:, 1] - y0, y1 - coords[:, 1]])

        def normal(node):
            i, j = tindex[node]
            v = np.array([int(i == 0) - int(i == n), int(j == 0) - int(j == n)], dtype=float)
            return v / np.linalg.norm(v)

        return _finish("rectangle", coords, ((x1 - x0) / n, (y1 - y0) / n), (n + 1, n + 1),
                       tindex, mask, normal, distance)

    if shape == "disk":
        if len(ext) == 1:
            cx, cy, r = 0.0, 0.0, ext[0]
        elif len(ext) == 3:
            cx, cy, r = ext
        else:
            raise ConfigurationError("disk extents must be (radius,) or (cx, cy, radius)",
                                     field="grid.extents")
        if not (np.isfinite(r) and r > 0):
            raise ConfigurationError(f"degenerate disk radius {r}", field="grid.extents")
        hx = 2.0 * r / n
        ticks = np.linspace(-r, r, n + 1)
        I, J = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        full = np.column_stack([I.ravel(), J.ravel()])
        rel = np.column_stack([ticks[full[:, 0]], ticks[full[:, 1]]])
        rad = np.hypot(rel[:, 0], rel[:, 1])
        active = rad <= r * (1.0 + 1e-12)
        tindex = full[active]
        coords = rel[active] + np.array([cx, cy])
        rad = rad[active]
        lookup = np.zeros((n + 1, n + 1), dtype=bool)
        lookup[tuple(tindex.T)] = True
        mask = np.zeros(tindex.shape[0], dtype=bool)
        for off in itertools.product((-1, 0, 1), repeat=2):
            if not any(off):
                continue
            idx = tindex + np.asarray(off)
            ok = np.all((idx >= 0) & (idx <= n), axis=1)
            has = np.zeros(tindex.shape[0], dtype=bool)
            has[ok] = lookup[tuple(idx[ok].T)]
            mask |= ~has
        if np.all(mask):
            raise ConfigurationError(f"disk grid with n={n} has no interior nodes", field="grid.n")
        distance = r - rad

        def normal(node):
            v = -(coords[node] - np.array([cx, cy]))
            nv = np.linalg.norm(v)
            return v / nv if nv > 0 else np.array([1.0, 0.0])

        return _finish("disk", coords, (hx, hx), (n + 1, n + 1), tindex, mask, normal,
                       distance, center=(cx, cy), radius=r)

    raise ConfigurationError(f"unknown planar shape {shape!r}", field="grid.shape")
