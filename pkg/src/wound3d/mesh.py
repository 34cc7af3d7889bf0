"""Indexed triangle meshes: file I/O, geometry queries, connectivity, boundaries,
and label-graph morphology.

Meshes are immutable after construction; all operations here are pure functions
of their inputs and safe to run in parallel.
"""

from __future__ import annotations

import struct
import warnings
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .labels import BACKGROUND, LabelField


class MeshError(ValueError):
    """Unreadable or structurally invalid mesh input."""


class TriangleMesh:
    """Indexed triangle mesh with derived per-face geometry.

    Parameters
    ----------
    vertices : (n, 3) array_like
        Vertex positions in model units.
    faces : (m, 3) array_like
        Vertex index triples. Counter-clockwise winding defines the outward
        normal.
    vertex_colors : (n, 3) uint8 array_like, optional
        Per-vertex RGB, passed through untouched by geometry operations.

    Degenerate faces (repeated indices or zero area) are dropped with a
    warning; the count is kept in ``n_dropped_faces``. An edge shared by more
    than two faces raises :class:`MeshError`.
    """

    def __init__(self, vertices, faces, vertex_colors=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        if self.vertices.shape[0] < 3 or self.faces.shape[0] < 1:
            raise MeshError("empty mesh")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError(
                f"face vertex index out of range (mesh has "
                f"{len(self.vertices)} vertices)"
            )

        self.vertex_colors = None
        if vertex_colors is not None:
            colors = np.ascontiguousarray(vertex_colors, dtype=np.uint8)
            if colors.shape != (len(self.vertices), 3):
                raise MeshError("vertex_colors must be (n, 3) uint8")
            self.vertex_colors = colors

        self.n_dropped_faces = self._drop_degenerate_faces()
        if self.faces.shape[0] == 0:
            raise MeshError("empty mesh (all faces degenerate)")
        self._check_manifold()

        self._normals = None
        self._areas = None
        self._barycenters = None
        self._adjacency = None

    # -- validation -------------------------------------------------------

    def _drop_degenerate_faces(self) -> int:
        f = self.faces
        distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
        v = self.vertices
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        span = np.linalg.norm(v.max(axis=0) - v.min(axis=0))
        keep = distinct & (areas > 1e-14 * max(span * span, 1e-300))
        dropped = int(np.count_nonzero(~keep))
        if dropped:
            warnings.warn(f"dropped {dropped} degenerate face(s)", stacklevel=3)
            self.faces = self.faces[keep]
        return dropped

    def _check_manifold(self) -> None:
        edges = self._directed_edges()
        und = np.sort(edges, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if counts.max(initial=0) > 2:
            bad = np.unique(und, axis=0)[np.argmax(counts)]
            raise MeshError(
                f"non-manifold edge ({bad[0]}, {bad[1]}) shared by "
                f"{counts.max()} faces"
            )

    def _directed_edges(self) -> np.ndarray:
        """All directed face edges, shape (3m, 2), face-major order."""
        f = self.faces
        return np.concatenate(
            [f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0
        )

    # -- derived geometry --------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def _compute_face_geometry(self):
        v, f = self.vertices, self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norms = np.linalg.norm(cross, axis=1)
        self._normals = cross / norms[:, None]
        self._areas = 0.5 * norms
        self._barycenters = v[f].mean(axis=1)

    @property
    def face_normals(self) -> np.ndarray:
        if self._normals is None:
            self._compute_face_geometry()
        return self._normals

    @property
    def face_areas(self) -> np.ndarray:
        if self._areas is None:
            self._compute_face_geometry()
        return self._areas

    @property
    def face_barycenters(self) -> np.ndarray:
        if self._barycenters is None:
            self._compute_face_geometry()
        return self._barycenters

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def face_adjacency(self) -> sparse.csr_matrix:
        """Sparse (m, m) boolean matrix; faces adjacent iff they share an edge."""
        if self._adjacency is None:
            edges = self._directed_edges()
            face_ids = np.tile(np.arange(self.n_faces), 3)
            und = np.sort(edges, axis=1)
            order = np.lexsort((und[:, 1], und[:, 0]))
            und, face_ids = und[order], face_ids[order]
            same = np.all(und[1:] == und[:-1], axis=1)
            a, b = face_ids[:-1][same], face_ids[1:][same]
            data = np.ones(2 * len(a), dtype=bool)
            rows = np.concatenate([a, b])
            cols = np.concatenate([b, a])
            self._adjacency = sparse.csr_matrix(
                (data, (rows, cols)), shape=(self.n_faces, self.n_faces)
            )
        return self._adjacency

    # -- transforms --------------------------------------------------------

    def transformed(self, rotation, translation) -> "TriangleMesh":
        """Rigidly transformed copy: v -> R v + t."""
        r = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64)
        return TriangleMesh(self.vertices @ r.T + t, self.faces, self.vertex_colors)

    def scaled(self, factor: float) -> "TriangleMesh":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return TriangleMesh(self.vertices * factor, self.faces, self.vertex_colors)


def face_normal_area_barycenter(mesh: TriangleMesh, face_id: int):
    """Unit normal (CCW winding), area, and vertex-mean barycenter of one face."""
    return (
        mesh.face_normals[face_id],
        float(mesh.face_areas[face_id]),
        mesh.face_barycenters[face_id],
    )


# -- connectivity ------------------------------------------------------------


def connected_face_sets(mesh: TriangleMesh, face_ids) -> list[np.ndarray]:
    """Edge-connected components of a face set, sorted by descending area."""
    face_ids = np.asarray(face_ids, dtype=np.int64)
    if face_ids.size == 0:
        return []
    sub = mesh.face_adjacency[face_ids][:, face_ids]
    n, assignment = csgraph.connected_components(sub, directed=False)
    comps = [face_ids[assignment == k] for k in range(n)]
    areas = mesh.face_areas
    comps.sort(key=lambda c: -float(areas[c].sum()))
    return comps


def connected_components(
    mesh: TriangleMesh, label_field: LabelField, class_id: int
) -> list[np.ndarray]:
    """Maximal edge-connected sets of faces carrying ``class_id``."""
    label_field.validate_for(mesh)
    return connected_face_sets(mesh, np.flatnonzero(label_field.face_labels == class_id))


def boundary_loops(mesh: TriangleMesh, face_set) -> list[np.ndarray]:
    """Closed, ordered vertex loops bounding a face set.

    A boundary edge is incident to exactly one face of the set. Loops are
    oriented so the face set lies to their left (following face winding),
    start at their lowest vertex index, and are returned longest first.
    """
    face_set = np.asarray(face_set, dtype=np.int64)
    if face_set.size == 0:
        raise ValueError("face_set is empty")
    f = mesh.faces[face_set]
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    und = np.sort(directed, axis=1)
    uniq, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    boundary = directed[counts[inverse] == 1]

    successors: dict[int, list[int]] = {}
    for a, b in boundary:
        successors.setdefault(int(a), []).append(int(b))
    for ends in successors.values():
        ends.sort()

    loops = []
    while successors:
        start = min(successors)
        loop = [start]
        current = start
        while True:
            ends = successors.get(current)
            if not ends:
                raise MeshError(f"open boundary chain; dangling at vertex {current}")
            nxt = ends.pop(0)
            if not ends:
                del successors[current]
            if nxt == start:
                break
            loop.append(nxt)
            current = nxt
        loop = np.asarray(loop, dtype=np.int64)
        shift = int(np.argmin(loop))
        loops.append(np.roll(loop, -shift))

    def loop_length(loop):
        pts = mesh.vertices[loop]
        return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())

    loops.sort(key=lambda lp: -loop_length(lp))
    return loops


# -- label morphology --------------------------------------------------------


def _dilate(adjacency: sparse.csr_matrix, indicator: np.ndarray, radius: int) -> np.ndarray:
    out = indicator.copy()
    for _ in range(radius):
        out = out | (adjacency @ out)
    return out


def label_morphology(
    mesh: TriangleMesh,
    label_field: LabelField,
    class_id: int,
    op: str,
    radius: int,
) -> LabelField:
    """Binary opening/closing of one class over the face-adjacency graph.

    Erosion and dilation use the graph ball of ``radius`` edge-hops as the
    structuring element. Faces gaining the class get ``class_id``; faces
    losing it fall back to background.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if op not in ("open", "close"):
        raise ValueError(f"op must be 'open' or 'close', got {op!r}")
    label_field.validate_for(mesh)
    adj = mesh.face_adjacency
    x = label_field.face_labels == class_id

    def erode(ind):
        return ~_dilate(adj, ~ind, radius)

    if op == "open":
        result = _dilate(adj, erode(x), radius)
    else:
        result = erode(_dilate(adj, x, radius))

    labels = label_field.face_labels.copy()
    labels[result & ~x] = class_id
    labels[x & ~result] = BACKGROUND
    return LabelField(labels, label_field.taxonomy)


# -- file I/O ----------------------------------------------------------------

_PLY_DTYPES = {
    "char": "i1", "uchar": "u1", "int8": "i1", "uint8": "u1",
    "short": "i2", "ushort": "u2", "int16": "i2", "uint16": "u2",
    "int": "i4", "uint": "u4", "int32": "i4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_mesh(path) -> TriangleMesh:
    """Load a triangle mesh from a PLY (ascii or binary little-endian) or OBJ file."""
    path = Path(path)
    if not path.exists():
        raise MeshError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".ply":
        return _load_ply(path)
    if suffix == ".obj":
        return _load_obj(path)
    raise MeshError(f"unsupported mesh format {suffix!r} (expected .ply or .obj)")


def save_mesh(path, mesh: TriangleMesh, binary: bool = True) -> None:
    """Write a mesh as PLY (binary little-endian by default) or OBJ by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ply":
        _save_ply(path, mesh, binary=binary)
    elif suffix == ".obj":
        _save_obj(path, mesh)
    else:
        raise MeshError(f"unsupported mesh format {suffix!r} (expected .ply or .obj)")


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MeshError(f"{path}: not a PLY file")
        fmt = None
        elements = []  # (name, count, [(prop_name, dtype, is_list, count_dtype)])
        while True:
            line = fh.readline()
            if not line:
                raise MeshError(f"{path}: truncated PLY header")
            tokens = line.decode("ascii", "replace").split()
            if not tokens or tokens[0] == "comment":
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                elements.append((tokens[1], int(tokens[2]), []))
            elif tokens[0] == "property":
                if not elements:
                    raise MeshError(f"{path}: property before element")
                if tokens[1] == "list":
                    elements[-1][2].append((tokens[4], tokens[3], True, tokens[2]))
                else:
                    elements[-1][2].append((tokens[2], tokens[1], False, None))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MeshError(f"{path}: unsupported PLY format {fmt!r}")
        try:
            if fmt == "ascii":
                data = _read_ply_ascii(fh, elements)
            else:
                data = _read_ply_binary(fh, elements)
        except (ValueError, IndexError, struct.error) as exc:
            raise MeshError(f"{path}: malformed PLY body ({exc})") from exc
    return _assemble_mesh(path, data)


def _read_ply_ascii(fh, elements):
    values = fh.read().decode("ascii", "replace").split()
    pos = 0
    data = {}
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            row = {}
            for pname, ptype, is_list, _ in props:
                if is_list:
                    n = int(values[pos]); pos += 1
                    row[pname] = [float(values[pos + i]) for i in range(n)]
                    pos += n
                else:
                    row[pname] = float(values[pos]); pos += 1
            rows.append(row)
        data[name] = rows
    return data


def _read_ply_binary(fh, elements):
    data = {}
    for name, count, props in elements:
        is_fixed = all(not p[2] for p in props)
        if is_fixed:
            dtype = np.dtype([(p[0], "<" + _PLY_DTYPES[p[1]]) for p in props])
            raw = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
            data[name] = [{p[0]: float(raw[p[0]][i]) for p in props} for i in range(count)]
        else:
            rows = []
            for _ in range(count):
                row = {}
                for pname, ptype, is_list, count_type in props:
                    if is_list:
                        cdt = np.dtype("<" + _PLY_DTYPES[count_type])
                        n = int(np.frombuffer(fh.read(cdt.itemsize), dtype=cdt)[0])
                        idt = np.dtype("<" + _PLY_DTYPES[ptype])
                        row[pname] = np.frombuffer(fh.read(idt.itemsize * n), dtype=idt, count=n).tolist()
                    else:
                        idt = np.dtype("<" + _PLY_DTYPES[ptype])
                        row[pname] = float(np.frombuffer(fh.read(idt.itemsize), dtype=idt)[0])
                rows.append(row)
            data[name] = rows
    return data


def _assemble_mesh(path: Path, data) -> TriangleMesh:
    if "vertex" not in data or "face" not in data:
        raise MeshError(f"{path}: PLY missing vertex or face element")
    vrows = data["vertex"]
    if not vrows or not data["face"]:
        raise MeshError(f"{path}: empty mesh")
    vertices = np.array([[r["x"], r["y"], r["z"]] for r in vrows])
    colors = None
    if all(k in vrows[0] for k in ("red", "green", "blue")):
        colors = np.array(
            [[r["red"], r["green"], r["blue"]] for r in vrows], dtype=np.uint8
        )
    faces = []
    for row in data["face"]:
        idx = row.get("vertex_indices", row.get("vertex_index"))
        if idx is None:
            raise MeshError(f"{path}: face element lacks vertex_indices")
        idx = [int(i) for i in idx]
        if len(idx) < 3:
            raise MeshError(f"{path}: face with fewer than 3 vertices")
        for k in range(1, len(idx) - 1):  # fan-triangulate polygons
            faces.append([idx[0], idx[k], idx[k + 1]])
    if np.max(faces) >= len(vertices) or np.min(faces) < 0:
        raise MeshError(
            f"{path}: face vertex index out of range (mesh has {len(vertices)} vertices)"
        )
    return TriangleMesh(vertices, faces, colors)


def _save_ply(path: Path, mesh: TriangleMesh, binary: bool) -> None:
    has_color = mesh.vertex_colors is not None
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {mesh.n_vertices}")
    header += ["property double x", "property double y", "property double z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append(f"element face {mesh.n_faces}")
    header.append("property list uchar int vertex_indices")
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            if has_color:
                vdt = np.dtype([("xyz", "<f8", 3), ("rgb", "u1", 3)])
                vbuf = np.empty(mesh.n_vertices, dtype=vdt)
                vbuf["xyz"] = mesh.vertices
                vbuf["rgb"] = mesh.vertex_colors
            else:
                vbuf = mesh.vertices.astype("<f8")
            fh.write(vbuf.tobytes())
            fdt = np.dtype([("n", "u1"), ("idx", "<i4", 3)])
            fbuf = np.empty(mesh.n_faces, dtype=fdt)
            fbuf["n"] = 3
            fbuf["idx"] = mesh.faces
            fh.write(fbuf.tobytes())
        else:
            lines = []
            for i, v in enumerate(mesh.vertices):
                line = f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}"
                if has_color:
                    c = mesh.vertex_colors[i]
                    line += f" {c[0]} {c[1]} {c[2]}"
                lines.append(line)
            for f in mesh.faces:
                lines.append(f"3 {f[0]} {f[1]} {f[2]}")
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


def _load_obj(path: Path) -> TriangleMesh:
    vertices, faces, colors = [], [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if tokens[0] == "v":
                if len(tokens) < 4:
                    raise MeshError(f"{path}:{lineno}: malformed vertex line")
                vertices.append([float(t) for t in tokens[1:4]])
                if len(tokens) >= 7:  # non-standard but common: v x y z r g b
                    colors.append([float(t) for t in tokens[4:7]])
            elif tokens[0] == "f":
                idx = []
                for tok in tokens[1:]:
                    i = int(tok.split("/")[0])
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                if len(idx) < 3:
                    raise MeshError(f"{path}:{lineno}: face with fewer than 3 vertices")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise MeshError(f"{path}: empty mesh")
    faces_arr = np.asarray(faces)
    if faces_arr.max() >= len(vertices) or faces_arr.min() < 0:
        raise MeshError(
            f"{path}: face vertex index out of range (mesh has {len(vertices)} vertices)"
        )
    color_arr = None
    if len(colors) == len(vertices):
        color_arr = np.clip(np.asarray(colors) * 255.0, 0, 255).astype(np.uint8)
    return TriangleMesh(np.asarray(vertices), faces_arr, color_arr)


def _save_obj(path: Path, mesh: TriangleMesh) -> None:
    lines = []
    has_color = mesh.vertex_colors is not None
    for i, v in enumerate(mesh.vertices):
        line = f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}"
        if has_color:
            c = mesh.vertex_colors[i] / 255.0
            line += f" {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}"
        lines.append(line)
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
