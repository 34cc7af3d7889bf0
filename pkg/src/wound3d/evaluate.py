"""Reconstruction and segmentation quality metrics.

Surface comparison follows the usual protocol: rigidly align with ICP, sample
both surfaces uniformly by area, then compute nearest-neighbor distance
statistics (Chamfer, per-point absolute, Hausdorff) and normal consistency.
Nearest neighbors are exact (KD-tree), no approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import labels as lab
from .camera import CameraView
from .labels import LabelField
from .mesh import TriangleMesh
from .raster import rasterize


@dataclass
class PointSamples:
    """Uniform surface samples with source faces and face normals."""

    points: np.ndarray    # (n, 3)
    normals: np.ndarray   # (n, 3) unit
    face_ids: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.points)


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> PointSamples:
    """Area-weighted uniform surface sampling, deterministic under a seed."""
    if n < 1:
        raise ValueError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    face_ids = rng.choice(mesh.n_faces, size=n, p=areas / areas.sum())
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0  # reflect into the lower barycentric triangle
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    tri = mesh.vertices[mesh.faces[face_ids]]
    points = (
        tri[:, 0] * (1.0 - u - v)[:, None]
        + tri[:, 1] * u[:, None]
        + tri[:, 2] * v[:, None]
    )
    return PointSamples(points, mesh.face_normals[face_ids].copy(), face_ids)


def icp_align(
    source: np.ndarray,
    target: np.ndarray,
    max_iter: int = 50,
    tol: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Point-to-point ICP: rigid (R, t) mapping source onto target, plus final RMS.

    Each iteration matches transformed source points to their nearest target
    points and re-solves the absolute transform with the SVD (Kabsch) method.
    Stops when the RMS change drops below ``tol``. Convergence to the global
    optimum is not guaranteed for unrelated clouds; inspect the RMS.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    for name, pts in (("source", source), ("target", target)):
        if len(pts) < 3:
            raise ValueError(f"{name} needs at least 3 points")
        sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
        if sv[1] <= 1e-12 * max(sv[0], 1e-300):
            raise ValueError(f"{name} points are collinear")

    tree = cKDTree(target)
    r = np.eye(3)
    t = np.zeros(3)
    prev_rms = np.inf
    rms = prev_rms
    for _ in range(max_iter):
        moved = source @ r.T + t
        dist, idx = tree.query(moved)
        rms = float(np.sqrt(np.mean(dist**2)))
        if abs(prev_rms - rms) < tol:
            break
        prev_rms = rms
        r, t = _kabsch(source, target[idx])
    return r, t, rms


def _kabsch(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid transform taking points a onto points b."""
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    h = (a - ca).T @ (b - cb)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return r, cb - r @ ca


@dataclass
class SurfaceMetrics:
    chamfer: float            # mean(A->B) + mean(B->A)
    hausdorff: float          # max over both directions
    normal_consistency: float # mean |cos| between nearest-pair normals
    ad_forward: np.ndarray    # per-point nearest distances A->B
    ad_backward: np.ndarray   # per-point nearest distances B->A

    @property
    def ad_mean(self) -> float:
        return float(self.ad_forward.mean())

    def to_dict(self) -> dict:
        return {
            "chamfer": self.chamfer,
            "hausdorff": self.hausdorff,
            "normal_consistency": self.normal_consistency,
            "ad_mean": self.ad_mean,
            "ad_median": float(np.median(self.ad_forward)),
            "ad_max": float(self.ad_forward.max()),
            "ad_backward_mean": float(self.ad_backward.mean()),
        }


def surface_metrics(a: PointSamples, b: PointSamples) -> SurfaceMetrics:
    """Chamfer / absolute / Hausdorff distances and normal consistency."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample set")
    tree_b = cKDTree(b.points)
    tree_a = cKDTree(a.points)
    d_ab, idx_ab = tree_b.query(a.points)
    d_ba, idx_ba = tree_a.query(b.points)
    nc_ab = np.abs(np.einsum("ij,ij->i", a.normals, b.normals[idx_ab]))
    nc_ba = np.abs(np.einsum("ij,ij->i", b.normals, a.normals[idx_ba]))
    return SurfaceMetrics(
        chamfer=float(d_ab.mean() + d_ba.mean()),
        hausdorff=float(max(d_ab.max(), d_ba.max())),
        normal_consistency=float(np.concatenate([nc_ab, nc_ba]).mean()),
        ad_forward=d_ab,
        ad_backward=d_ba,
    )


def dice(mask_a: np.ndarray, mask_b: np.ndarray, class_id) -> float:
    """Dice similarity of one class between two masks; 1.0 when both are empty.

    ``class_id`` may be a single id or an iterable of ids treated as one
    region (e.g. the wound bed with all its tissue refinements).
    """
    mask_a = np.asarray(mask_a)
    mask_b = np.asarray(mask_b)
    if mask_a.shape != mask_b.shape:
        raise ValueError(f"mask shapes differ: {mask_a.shape} vs {mask_b.shape}")
    ids = [class_id] if np.isscalar(class_id) else list(class_id)
    a = np.isin(mask_a, ids)
    b = np.isin(mask_b, ids)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def face_dice(labels_a: LabelField, labels_b: LabelField, class_id) -> float:
    """Dice similarity over face sets instead of pixels."""
    return dice(labels_a.face_labels, labels_b.face_labels, class_id)


def reproject_labels(
    mesh: TriangleMesh,
    label_field: LabelField,
    view: CameraView,
    backface_culling: bool = True,
) -> np.ndarray:
    """Render fused face labels back into a view as an 8-bit class mask."""
    label_field.validate_for(mesh)
    buffer = rasterize(mesh, view, backface_culling=backface_culling)
    out = np.full(buffer.face_id.shape, lab.BACKGROUND, dtype=np.uint8)
    covered = buffer.face_id >= 0
    out[covered] = label_field.face_labels[buffer.face_id[covered]].astype(np.uint8)
    return out
