import numpy as np
import pytest

from svstokes import Mesh


@pytest.fixture
def ref_triangle_mesh():
    return Mesh([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [(0, 1, 2)])


@pytest.fixture
def split_square_mesh():
    """Unit square split by the diagonal from (0,0) to (1,1)."""
    return Mesh(
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        [(0, 1, 2), (0, 2, 3)],
    )


@pytest.fixture
def ear_mesh():
    """Hexagon fan plus one ear triangle: exactly one super-critical vertex.

    The ear tip has a single incident triangle (hence singular); every other
    vertex has a non-degenerate angle pattern.
    """
    center = (0.0, 0.0)
    ring = [
        (np.cos(a), np.sin(a)) for a in np.linspace(0, 2 * np.pi, 7)[:-1]
    ]
    tip = (1.5 * (ring[0][0] + ring[1][0]), 1.5 * (ring[0][1] + ring[1][1]))
    verts = [center] + ring + [tip]
    tris = [(0, 1 + i, 1 + (i + 1) % 6) for i in range(6)]
    tris.append((1, 7, 2))
    return Mesh(verts, tris)


@pytest.fixture
def reentrant_mesh():
    """Three-quarter crisscross square plus an outer triangle.

    The center sits on the boundary with three triangles whose angles are
    all pi/2, so it is a super-critical vertex with N_z = 3; the outer
    triangle provides the companion across the middle triangle's far edge.
    """
    verts = [
        (0.0, 0.0),
        (1.0, 0.0),
        (1.0, 1.0),
        (0.0, 1.0),
        (0.5, 0.5),
        (1.5, 0.5),
    ]
    tris = [(0, 1, 4), (1, 2, 4), (2, 3, 4), (1, 5, 2)]
    return Mesh(verts, tris)
