"""Pinhole cameras: world/image mappings, per-face view rays, DLT triangulation.

Pose convention: world-from-camera rotation plus explicit camera center, so a
camera-frame point X_cam maps to the world as ``R @ X_cam + center`` and a
world point projects through ``R.T @ (X - center)``. Camera axes are x-right,
y-down, z-forward (in front of the camera means positive z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CameraView:
    view_id: str
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray  # (3, 3) world-from-camera
    center: np.ndarray    # (3,) camera center, model units
    image_name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"view {self.view_id}: focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValueError(f"view {self.view_id}: principal point outside image")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-8:
            raise ValueError(
                f"view {self.view_id}: rotation not orthonormal (deviation {err:.2e})"
            )

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.center) @ self.rotation

    def projection_matrix(self) -> np.ndarray:
        """3x4 matrix P with lambda * (u, v, 1) = P @ (X, 1)."""
        k = np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])
        rt = self.rotation.T
        return k @ np.hstack([rt, (-rt @ self.center)[:, None]])


def project(view: CameraView, point) -> tuple[float, float] | None:
    """Perspective projection; None if behind the camera or outside the image."""
    xc = view.world_to_camera(np.asarray(point, dtype=np.float64))
    if xc[2] <= 0:
        return None
    u = view.fx * xc[0] / xc[2] + view.cx
    v = view.fy * xc[1] / xc[2] + view.cy
    if not (0 <= u < view.width and 0 <= v < view.height):
        return None
    return float(u), float(v)


@dataclass(frozen=True)
class ViewRay:
    view_id: str
    face_id: int
    direction: np.ndarray  # unit vector, camera center toward face barycenter

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        object.__setattr__(self, "direction", d)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")


def face_ray(view: CameraView, mesh, face_id: int) -> ViewRay:
    """Unit ray from the camera center through the face barycenter."""
    d = mesh.face_barycenters[face_id] - view.center
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise ValueError(f"face {face_id} barycenter coincides with camera center")
    return ViewRay(view.view_id, int(face_id), d / n)


def dlt_triangulate(observations) -> tuple[np.ndarray, float]:
    """Triangulate one 3D point from (CameraView, pixel) observations.

    Stacks the homogeneous projection constraints of every observation and
    takes the smallest-singular-vector solution. Pixels are translated/scaled
    to zero mean and RMS sqrt(2) beforehand to condition the solve.

    Returns the point and the RMS reprojection error in pixels. Raises
    ValueError when fewer than two distinct camera centers are given or the
    system is rank deficient (effectively a single view).
    """
    obs = [(view, np.asarray(px, dtype=np.float64).reshape(2)) for view, px in observations]
    if len(obs) < 2:
        raise ValueError("triangulation needs at least 2 observations")
    centers = np.array([view.center for view, _ in obs])
    spread = np.linalg.norm(centers - centers[0], axis=1).max()
    if spread < 1e-12:
        raise ValueError("observations share a single camera center")

    pixels = np.array([px for _, px in obs])
    mean = pixels.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pixels - mean) ** 2, axis=1)))
    scale = np.sqrt(2.0) / rms if rms > 1e-12 else 1.0
    t = np.array([[scale, 0.0, -scale * mean[0]],
                  [0.0, scale, -scale * mean[1]],
                  [0.0, 0.0, 1.0]])

    rows = []
    for (view, px), npx in zip(obs, pixels @ t[:2, :2].T + t[:2, 2]):
        p = t @ view.projection_matrix()
        rows.append(npx[0] * p[2] - p[0])
        rows.append(npx[1] * p[2] - p[1])
    a = np.asarray(rows)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(a)
    if s[2] < 1e-9 * s[0]:
        raise ValueError("rank-deficient triangulation (rays effectively parallel)")
    h = vt[-1]
    if abs(h[3]) < 1e-12 * np.linalg.norm(h[:3]):
        raise ValueError("triangulated point at infinity (rays parallel)")
    point = h[:3] / h[3]

    sq = 0.0
    for view, px in obs:
        p = view.projection_matrix() @ np.append(point, 1.0)
        sq += np.sum((p[:2] / p[2] - px) ** 2)
    return point, float(np.sqrt(sq / len(obs)))


# -- pose file I/O -------------------------------------------------------------

POSE_SCHEMA = "wound3d/poses-v1"


def load_views(path) -> list[CameraView]:
    """Read the JSON pose file (see README for the schema)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read pose file {path}: {exc}") from exc
    views = []
    for i, entry in enumerate(doc.get("views", [])):
        try:
            views.append(
                CameraView(
                    view_id=str(entry["view_id"]),
                    image_name=entry.get("image", ""),
                    width=int(entry["width"]),
                    height=int(entry["height"]),
                    fx=float(entry["fx"]),
                    fy=float(entry["fy"]),
                    cx=float(entry["cx"]),
                    cy=float(entry["cy"]),
                    rotation=np.asarray(entry["rotation"], dtype=np.float64).reshape(3, 3),
                    center=np.asarray(entry["center"], dtype=np.float64),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            vid = entry.get("view_id", f"#{i}") if isinstance(entry, dict) else f"#{i}"
            raise ValueError(f"pose file {path}: bad view entry {vid}: {exc}") from exc
    if not views:
        raise ValueError(f"pose file {path}: no views")
    return views


def save_views(path, views) -> None:
    doc = {
        "schema": POSE_SCHEMA,
        "views": [
            {
                "view_id": v.view_id,
                "image": v.image_name,
                "width": v.width,
                "height": v.height,
                "fx": v.fx,
                "fy": v.fy,
                "cx": v.cx,
                "cy": v.cy,
                "rotation": [float(x) for x in v.rotation.ravel()],
                "center": [float(x) for x in v.center],
            }
            for v in views
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
