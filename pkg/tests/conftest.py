import warnings

import numpy as np
import pytest

from wound3d.mesh import TriangleMesh
from wound3d.synth import SceneSpec, generate_scene


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation matrix from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def grid_mesh(n: int = 8, extent: float = 1.0, height=None) -> TriangleMesh:
    """Square grid patch in the z-plane, optionally displaced by height(x, y)."""
    xs = np.linspace(-extent, extent, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    zz = np.zeros_like(xx) if height is None else height(xx, yy)
    vertices = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = a + 1
            c = a + n + 2
            d = a + n + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriangleMesh(vertices, faces)


def single_triangle(scale: float = 1.0) -> TriangleMesh:
    return TriangleMesh(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]) * scale,
        np.array([[0, 1, 2]]),
    )


def octahedron(radius: float = 1.0) -> TriangleMesh:
    v = radius * np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
        dtype=float,
    )
    f = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ]
    )
    return TriangleMesh(v, f)


def circle_loop(n: int = 64, radius: float = 10.0, z: float = 0.0) -> np.ndarray:
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack(
        [radius * np.cos(t), radius * np.sin(t), np.full_like(t, z)], axis=1
    )


@pytest.fixture(scope="session")
def crater_scene():
    """Plane-base spherical-cap scene shared by read-only tests."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_scene(
            SceneSpec(resolution=48, n_views=8, marker=False, extent=26.0)
        )


@pytest.fixture(scope="session")
def marker_scene():
    """Small scene with a marker, for scale and document tests."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_scene(
            SceneSpec(resolution=32, n_views=6, image_size=(320, 320), seed=5)
        )
