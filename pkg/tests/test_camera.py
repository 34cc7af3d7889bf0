import json

import numpy as np
import pytest

from wound3d.camera import (
    CameraView,
    dlt_triangulate,
    face_ray,
    load_views,
    project,
    save_views,
)
from wound3d.mesh import TriangleMesh

from conftest import random_rotation


def make_view(center, rotation=None, f=400.0, size=(640, 480), view_id="v"):
    return CameraView(
        view_id=view_id,
        width=size[0],
        height=size[1],
        fx=f,
        fy=f,
        cx=size[0] / 2,
        cy=size[1] / 2,
        rotation=np.eye(3) if rotation is None else rotation,
        center=np.asarray(center, dtype=float),
    )


def look_at(center, target, f=400.0, size=(640, 480), view_id="v"):
    z = np.asarray(target, float) - np.asarray(center, float)
    z /= np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return make_view(center, np.column_stack([x, y, z]), f, size, view_id)


class TestCameraView:
    def test_validation(self):
        with pytest.raises(ValueError, match="focal"):
            make_view([0, 0, 0], f=-1.0)
        with pytest.raises(ValueError, match="orthonormal"):
            CameraView("v", 640, 480, 400, 400, 320, 240,
                       np.eye(3) + 0.01, np.zeros(3))
        with pytest.raises(ValueError, match="principal"):
            CameraView("v", 640, 480, 400, 400, 900, 240, np.eye(3), np.zeros(3))

    def test_project_on_axis_hits_principal_point(self):
        view = make_view([0, 0, 0])
        assert project(view, [0, 0, 3.0]) == pytest.approx((320.0, 240.0))

    def test_project_behind_camera(self):
        view = make_view([0, 0, 0])
        assert project(view, [0, 0, -1.0]) is None

    def test_pinhole_offset(self):
        view = make_view([0, 0, 0])
        u, v = project(view, [0.5, 0.0, 4.0])
        assert u - 320.0 == pytest.approx(400.0 * 0.5 / 4.0)
        assert v == pytest.approx(240.0)

    def test_outside_image_is_none(self):
        view = make_view([0, 0, 0])
        assert project(view, [10.0, 0.0, 1.0]) is None

    def test_project_unproject_round_trip(self):
        rng = np.random.default_rng(0)
        view = make_view([1.0, -2.0, 0.5], random_rotation(rng))
        for _ in range(50):
            px = rng.uniform([0, 0], [640, 480])
            d = rng.uniform(0.5, 20.0)
            p_cam = np.array(
                [(px[0] - view.cx) / view.fx * d, (px[1] - view.cy) / view.fy * d, d]
            )
            world = view.rotation @ p_cam + view.center
            back = project(view, world)
            assert back is not None
            np.testing.assert_allclose(back, px, atol=1e-9)


class TestFaceRay:
    def test_straight_ahead(self):
        mesh = TriangleMesh(
            [[-1, -1, 2], [1, -1, 2], [0, 2, 2]], [[0, 1, 2]]
        )
        ray = face_ray(make_view([0, 0, 0]), mesh, 0)
        np.testing.assert_allclose(ray.direction, [0, 0, 1], atol=1e-12)

    def test_negative_direction(self):
        mesh = TriangleMesh(
            [[0, -1, -3], [2, -1, -3], [1, 2, -3]], [[0, 1, 2]]
        )
        ray = face_ray(make_view([1.0, 0.0, 0.0]), mesh, 0)
        np.testing.assert_allclose(ray.direction, [0, 0, -1], atol=1e-12)

    def test_degenerate_barycenter(self):
        mesh = TriangleMesh([[0, 0, 0], [3, 0, 0], [0, 3, 0]], [[0, 1, 2]])
        bary = mesh.face_barycenters[0]
        with pytest.raises(ValueError, match="coincides"):
            face_ray(make_view(bary), mesh, 0)


class TestDltTriangulate:
    def test_noiseless_two_views(self):
        point = np.array([0.3, -0.2, 5.0])
        views = [look_at([2, 0, 0], point, view_id="a"),
                 look_at([-2, 0.5, 0], point, view_id="b")]
        obs = [(v, project(v, point)) for v in views]
        recovered, residual = dlt_triangulate(obs)
        np.testing.assert_allclose(recovered, point, atol=1e-8)
        assert residual < 1e-6

    def test_noisy_monte_carlo(self):
        # independent oracle: for orbiting cameras at distance Z and focal f,
        # a sigma-pixel error maps to ~ sigma * Z / f per observation; the
        # N-view LS average shrinks it by sqrt(N); 6x covers the tail
        point = np.array([0.0, 0.0, 0.0])
        n_views, sigma, f, dist = 10, 0.5, 400.0, 4.0
        views = []
        for k in range(n_views):
            a = 2 * np.pi * k / n_views
            c = dist * np.array([np.cos(a), np.sin(a), 0.6])
            views.append(look_at(c, point, f=f, view_id=f"v{k}"))
        bound = 6.0 * sigma * dist / f / np.sqrt(n_views)
        rng = np.random.default_rng(42)
        for _ in range(50):
            obs = []
            for v in views:
                px = np.asarray(project(v, point)) + rng.normal(0, sigma, 2)
                obs.append((v, px))
            recovered, _ = dlt_triangulate(obs)
            assert np.linalg.norm(recovered - point) < bound

    def test_duplicate_views_rank_deficient(self):
        point = np.array([0.0, 0.0, 4.0])
        v = look_at([1, 1, 0], point)
        px = project(v, point)
        with pytest.raises(ValueError, match="single camera center"):
            dlt_triangulate([(v, px), (v, px)])

    def test_parallel_rays_rejected(self):
        # two cameras displaced along their shared optical axis see the point
        # along the same ray: no lateral baseline
        v1 = make_view([0, 0, 0], view_id="a")
        v2 = make_view([0, 0, 1.0], view_id="b")
        point = [0, 0, 5.0]
        with pytest.raises(ValueError, match="rank-deficient|parallel"):
            dlt_triangulate([(v1, project(v1, point)), (v2, project(v2, point))])

    def test_rigid_invariance(self):
        rng = np.random.default_rng(3)
        point = np.array([0.2, 0.1, 3.0])
        views = [look_at([2, -1, 0], point, view_id="a"),
                 look_at([-1, 2, 0.5], point, view_id="b"),
                 look_at([0, -2, 1.0], point, view_id="c")]
        obs = [(v, project(v, point)) for v in views]
        base, _ = dlt_triangulate(obs)
        r, t = random_rotation(rng), rng.uniform(-3, 3, 3)
        moved_views = [
            CameraView(v.view_id, v.width, v.height, v.fx, v.fy, v.cx, v.cy,
                       r @ v.rotation, r @ v.center + t)
            for v in views
        ]
        moved_obs = [(mv, px) for mv, (_, px) in zip(moved_views, obs)]
        moved, _ = dlt_triangulate(moved_obs)
        np.testing.assert_allclose(moved, r @ base + t, atol=1e-8)

    def test_too_few_observations(self):
        v = make_view([0, 0, 0])
        with pytest.raises(ValueError, match="at least 2"):
            dlt_triangulate([(v, (320, 240))])


class TestPoseFile:
    def test_round_trip(self, tmp_path):
        views = [look_at([2, 0, 1], [0, 0, 0], view_id="cam0"),
                 look_at([-2, 1, 1], [0, 0, 0], view_id="cam1")]
        path = tmp_path / "poses.json"
        save_views(path, views)
        back = load_views(path)
        assert [v.view_id for v in back] == ["cam0", "cam1"]
        for a, b in zip(views, back):
            np.testing.assert_allclose(a.rotation, b.rotation)
            np.testing.assert_allclose(a.center, b.center)
            assert (a.fx, a.fy, a.cx, a.cy) == (b.fx, b.fy, b.cx, b.cy)

    def test_corrupt_entry_named(self, tmp_path):
        path = tmp_path / "poses.json"
        doc = {"views": [{"view_id": "cam7", "width": 640, "height": 480,
                          "fx": 400, "fy": 400, "cx": 320, "cy": 240,
                          "rotation": [1, 0, 0, 0, 1, 0], "center": [0, 0, 0]}]}
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="cam7"):
            load_views(path)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "poses.json"
        path.write_text("{not json")
        with pytest.raises(ValueError, match="cannot read"):
            load_views(path)
