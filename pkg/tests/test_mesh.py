import numpy as np
import pytest

from wound3d.labels import BACKGROUND, WOUND_BED, LabelField
from wound3d.mesh import (
    MeshError,
    TriangleMesh,
    boundary_loops,
    connected_components,
    face_normal_area_barycenter,
    label_morphology,
    load_mesh,
    save_mesh,
)

from conftest import grid_mesh, octahedron, random_rotation, single_triangle


def write_ascii_ply(path, vertices, faces):
    lines = ["ply", "format ascii 1.0", f"element vertex {len(vertices)}",
             "property double x", "property double y", "property double z",
             f"element face {len(faces)}",
             "property list uchar int vertex_indices", "end_header"]
    for v in vertices:
        lines.append(f"{v[0]} {v[1]} {v[2]}")
    for f in faces:
        lines.append("3 " + " ".join(str(i) for i in f))
    path.write_text("\n".join(lines) + "\n")


class TestLoadMesh:
    def test_single_triangle_readback(self, tmp_path):
        path = tmp_path / "tri.ply"
        write_ascii_ply(path, [[0, 0, 0], [2, 0, 0], [0, 2, 0]], [[0, 1, 2]])
        mesh = load_mesh(path)
        assert mesh.n_vertices == 3
        assert mesh.n_faces == 1
        assert mesh.face_areas[0] == pytest.approx(2.0)

    def test_zero_area_face_dropped_with_warning(self, tmp_path):
        path = tmp_path / "degen.ply"
        write_ascii_ply(
            path,
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]],
            [[0, 1, 2], [0, 1, 3]],  # second face is collinear
        )
        with pytest.warns(UserWarning, match="degenerate"):
            mesh = load_mesh(path)
        assert mesh.n_faces == 1
        assert mesh.n_dropped_faces == 1

    def test_out_of_range_index(self, tmp_path):
        path = tmp_path / "bad.ply"
        write_ascii_ply(path, [[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 10]])
        with pytest.raises(MeshError, match="out of range"):
            load_mesh(path)

    def test_empty_mesh(self, tmp_path):
        path = tmp_path / "empty.ply"
        write_ascii_ply(path, [], [])
        with pytest.raises(MeshError, match="empty"):
            load_mesh(path)

    def test_nonmanifold_edge_rejected(self):
        # three faces sharing edge (0, 1)
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
        f = [[0, 1, 2], [1, 0, 3], [0, 1, 4]]
        with pytest.raises(MeshError, match="non-manifold"):
            TriangleMesh(v, f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MeshError, match="not found"):
            load_mesh(tmp_path / "nope.ply")

    @pytest.mark.parametrize("binary", [True, False])
    def test_ply_round_trip_with_colors(self, tmp_path, binary):
        mesh = octahedron()
        colors = (np.arange(mesh.n_vertices * 3) % 256).reshape(-1, 3).astype(np.uint8)
        mesh = TriangleMesh(mesh.vertices, mesh.faces, colors)
        path = tmp_path / "oct.ply"
        save_mesh(path, mesh, binary=binary)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.faces, mesh.faces)
        np.testing.assert_array_equal(back.vertex_colors, colors)

    def test_obj_round_trip(self, tmp_path):
        mesh = octahedron()
        path = tmp_path / "oct.obj"
        save_mesh(path, mesh)
        back = load_mesh(path)
        np.testing.assert_allclose(back.vertices, mesh.vertices)
        np.testing.assert_array_equal(back.faces, mesh.faces)


class TestFaceGeometry:
    def test_normal_area_barycenter(self):
        mesh = single_triangle()
        n, a, b = face_normal_area_barycenter(mesh, 0)
        np.testing.assert_allclose(n, [0, 0, 1])
        assert a == pytest.approx(0.5)
        np.testing.assert_allclose(b, [1 / 3, 1 / 3, 0])

    def test_reversed_winding_flips_normal(self):
        mesh = TriangleMesh(single_triangle().vertices, [[0, 2, 1]])
        n, _, _ = face_normal_area_barycenter(mesh, 0)
        np.testing.assert_allclose(n, [0, 0, -1])

    def test_area_scales_quadratically(self):
        _, a, _ = face_normal_area_barycenter(single_triangle(scale=2.0), 0)
        assert a == pytest.approx(2.0)

    def test_total_area_rigid_invariant(self):
        mesh = grid_mesh(6, height=lambda x, y: 0.3 * np.sin(x) * y)
        rng = np.random.default_rng(0)
        for _ in range(5):
            moved = mesh.transformed(random_rotation(rng), rng.uniform(-5, 5, 3))
            assert moved.total_area == pytest.approx(mesh.total_area, rel=1e-9)

    def test_unit_normals(self):
        mesh = grid_mesh(5, height=lambda x, y: x * x - y)
        np.testing.assert_allclose(
            np.linalg.norm(mesh.face_normals, axis=1), 1.0, atol=1e-9
        )


class TestConnectivity:
    def test_single_component(self):
        mesh = grid_mesh(4)
        labels = LabelField(np.full(mesh.n_faces, WOUND_BED))
        comps = connected_components(mesh, labels, WOUND_BED)
        assert len(comps) == 1
        assert len(comps[0]) == mesh.n_faces

    def test_two_patches(self):
        mesh = grid_mesh(4)
        labels = np.zeros(mesh.n_faces, dtype=int)
        labels[0] = WOUND_BED            # one corner quad-triangle
        labels[-1] = WOUND_BED           # opposite corner
        comps = connected_components(mesh, LabelField(labels), WOUND_BED)
        assert len(comps) == 2

    def test_no_faces(self):
        mesh = grid_mesh(2)
        labels = LabelField(np.zeros(mesh.n_faces, dtype=int))
        assert connected_components(mesh, labels, WOUND_BED) == []

    def test_partition_property(self, crater_scene):
        mesh, labels = crater_scene.mesh, crater_scene.labels
        for class_id in np.unique(labels.face_labels):
            comps = connected_components(mesh, labels, class_id)
            combined = np.concatenate(comps) if comps else np.array([], dtype=int)
            expected = np.flatnonzero(labels.face_labels == class_id)
            assert len(combined) == len(set(combined.tolist()))
            np.testing.assert_array_equal(np.sort(combined), expected)
            areas = [mesh.face_areas[c].sum() for c in comps]
            assert areas == sorted(areas, reverse=True)


class TestBoundaryLoops:
    def test_single_triangle(self):
        mesh = single_triangle()
        loops = boundary_loops(mesh, [0])
        assert len(loops) == 1
        assert sorted(loops[0].tolist()) == [0, 1, 2]

    def test_disk_rim_in_cyclic_order(self):
        # hexagon fan around one interior vertex; brute-force oracle: boundary
        # edges are exactly those used by a single face of the set
        center = np.array([[0.0, 0.0, 0.0]])
        t = np.linspace(0, 2 * np.pi, 6, endpoint=False)
        rim = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
        mesh = TriangleMesh(
            np.vstack([center, rim]),
            [[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)],
        )
        face_set = np.arange(6)

        edge_count = {}
        for f in mesh.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                edge_count[frozenset((a, b))] = edge_count.get(frozenset((a, b)), 0) + 1
        expected_edges = {e for e, c in edge_count.items() if c == 1}

        loops = boundary_loops(mesh, face_set)
        assert len(loops) == 1
        loop = loops[0]
        assert loop[0] == loop.min()
        got_edges = {
            frozenset((int(loop[i]), int(loop[(i + 1) % len(loop)])))
            for i in range(len(loop))
        }
        assert got_edges == expected_edges

    def test_annulus_two_loops(self):
        scene_mesh = grid_mesh(6)
        bary = scene_mesh.face_barycenters
        ring = np.flatnonzero(
            (np.abs(bary[:, :2]).max(axis=1) > 0.34)
            & (np.abs(bary[:, :2]).max(axis=1) < 0.99)
        )
        loops = boundary_loops(scene_mesh, ring)
        assert len(loops) == 2
        assert len(loops[0]) > len(loops[1])  # outer rim first

    def test_closed_mesh_has_no_boundary(self):
        mesh = octahedron()
        assert boundary_loops(mesh, np.arange(mesh.n_faces)) == []

    def test_two_triangles_sharing_a_vertex(self):
        v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]]
        f = [[0, 1, 2], [0, 3, 4]]
        loops = boundary_loops(TriangleMesh(v, f), [0, 1])
        assert len(loops) == 2

    def test_empty_face_set(self):
        with pytest.raises(ValueError, match="empty"):
            boundary_loops(single_triangle(), [])


class TestLabelMorphology:
    def test_open_removes_isolated_face(self):
        mesh = grid_mesh(4)
        labels = np.zeros(mesh.n_faces, dtype=int)
        labels[10] = WOUND_BED
        out = label_morphology(mesh, LabelField(labels), WOUND_BED, "open", 1)
        assert out.face_labels[10] == BACKGROUND
        assert not out.mask(WOUND_BED).any()

    def test_close_fills_hole(self):
        mesh = grid_mesh(4)
        labels = np.full(mesh.n_faces, WOUND_BED)
        labels[10] = BACKGROUND
        out = label_morphology(mesh, LabelField(labels), WOUND_BED, "close", 1)
        assert out.face_labels[10] == WOUND_BED

    @pytest.mark.parametrize("op", ["open", "close"])
    @pytest.mark.parametrize("radius", [1, 2, 3])
    def test_uniform_field_unchanged(self, op, radius):
        mesh = grid_mesh(4)
        labels = LabelField(np.full(mesh.n_faces, WOUND_BED))
        out = label_morphology(mesh, labels, WOUND_BED, op, radius)
        np.testing.assert_array_equal(out.face_labels, labels.face_labels)

    @pytest.mark.parametrize("radius", [1, 2])
    def test_opening_idempotent(self, radius):
        mesh = grid_mesh(6)
        rng = np.random.default_rng(1)
        labels = LabelField((rng.random(mesh.n_faces) < 0.5).astype(int) * WOUND_BED)
        once = label_morphology(mesh, labels, WOUND_BED, "open", radius)
        twice = label_morphology(mesh, once, WOUND_BED, "open", radius)
        np.testing.assert_array_equal(once.face_labels, twice.face_labels)

    def test_radius_validation(self):
        mesh = grid_mesh(2)
        labels = LabelField(np.zeros(mesh.n_faces, dtype=int))
        with pytest.raises(ValueError, match="radius"):
            label_morphology(mesh, labels, WOUND_BED, "open", 0)
        with pytest.raises(ValueError, match="op"):
            label_morphology(mesh, labels, WOUND_BED, "dilate", 1)
