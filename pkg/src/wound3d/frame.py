"""Wound-centric reference frame for standardized measurement.

The frame translates the wound bed's area-weighted centroid to the origin and
aligns the principal axes of its vertices with x, y, z, smallest variance
last. The z sign follows the mean face normal of the wound cavity, so +z
points out of the body and depressions have negative depth.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh


@dataclass(frozen=True)
class ReferenceFrame:
    """Rigid map from model frame to measurement frame: p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def apply_to_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        return mesh.transformed(self.rotation, self.translation)

    def inverse(self) -> "ReferenceFrame":
        return ReferenceFrame(self.rotation.T, -self.rotation.T @ self.translation)


def compute_frame(mesh: TriangleMesh, wound_faces) -> ReferenceFrame:
    """Measurement frame from the wound-bed faces of a mesh.

    The centroid is area-weighted over the wound faces so tessellation density
    does not bias it; the axes come from PCA of the wound vertices. Raises on
    collinear or degenerate vertex sets.
    """
    wound_faces = np.asarray(wound_faces, dtype=np.int64)
    if wound_faces.size == 0:
        raise ValueError("wound face set is empty")

    areas = mesh.face_areas[wound_faces]
    centroid = (mesh.face_barycenters[wound_faces] * areas[:, None]).sum(axis=0) / areas.sum()

    vertex_ids = np.unique(mesh.faces[wound_faces])
    pts = mesh.vertices[vertex_ids]
    if len(pts) < 3:
        raise ValueError("wound needs at least 3 vertices")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[1] <= 1e-12 * max(evals[2], 1e-300):
        raise ValueError("wound vertices are collinear; cannot orient frame")
    gaps = np.diff(evals) / max(evals[2], 1e-300)
    if gaps.min() < 1e-6:
        warnings.warn(
            "near-isotropic principal axes; in-plane orientation may not be "
            "reproducible across runs"
        )

    e_x = evecs[:, 2]  # largest variance
    e_z = evecs[:, 0]  # smallest variance

    mean_normal = (mesh.face_normals[wound_faces] * areas[:, None]).sum(axis=0)
    if np.dot(e_z, mean_normal) < 0:
        e_z = -e_z
    # canonical x sign, then y from the right-hand rule so det = +1
    if e_x[np.argmax(np.abs(e_x))] < 0:
        e_x = -e_x
    e_y = np.cross(e_z, e_x)
    e_y /= np.linalg.norm(e_y)

    rotation = np.vstack([e_x, e_y, e_z])
    return ReferenceFrame(rotation, -rotation @ centroid)
