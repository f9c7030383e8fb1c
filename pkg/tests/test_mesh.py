from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qgrowth.errors import ConfigurationError
from qgrowth.mesh import build_interval_grid, build_planar_grid


def test_interval_nodes_and_interior():
    g = build_interval_grid(0.0, 1.0, 4)
    np.testing.assert_array_equal(g.x, [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(g.interior, [1, 2, 3])
    assert g.distance[1] == 0.25


def test_interval_rejects_too_few_cells():
    with pytest.raises(ConfigurationError):
        build_interval_grid(0.0, 1.0, 2)


def test_rectangle_interior_count():
    g = build_planar_grid("rectangle", (0, 1, 0, 1), 4)
    assert g.n_interior == 9


def test_disk_boundary_hugs_circle():
    g = build_planar_grid("disk", (1.0,), 16)
    r = np.linalg.norm(g.coords[g.boundary], axis=1)
    # scanned directly rather than trusting the stored distance
    assert np.all(np.abs(r - 1.0) <= g.h * np.sqrt(2))


def test_degenerate_disk():
    with pytest.raises(ConfigurationError):
        build_planar_grid("disk", (0.0,), 16)


def test_staircase_corners_do_not_face_interior():
    g = build_planar_grid("disk", (1.0,), 32)
    facing = g.facing_interior
    assert facing.sum() < facing.size
    assert build_planar_grid("rectangle", (0, 1, 0, 1), 8).facing_interior.all()


@given(a=st.floats(-5, 5), length=st.floats(0.1, 10), n=st.integers(3, 200))
@settings(max_examples=50, deadline=None)
def test_interval_partition(a, length, n):
    g = build_interval_grid(a, a + length, n)
    both = np.sort(np.concatenate([g.interior, g.boundary]))
    np.testing.assert_array_equal(both, np.arange(g.size))
    assert np.all(g.distance[g.boundary] == 0)
    assert np.all(g.distance[g.interior] > 0)
    assert g.facing_interior.all()


@given(n=st.integers(4, 24))
@settings(max_examples=20, deadline=None)
def test_rectangle_interior_count_property(n):
    g = build_planar_grid("rectangle", (0, 2, -1, 1), n)
    assert g.n_interior == (n - 1) ** 2
