"""Software rasterization of meshes into camera views.

Edge-function triangle fill with a z-buffer. Pixel centers sit at half-integer
coordinates and edge ties follow a fixed top-left rule, so buffers are
bit-reproducible. Faces with any vertex behind the camera are clipped;
back-face culling is on by default (open wound surfaces; culling suppresses
spurious underside hits).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .camera import CameraView
from .mesh import TriangleMesh


@dataclass
class FaceIdBuffer:
    """Per-pixel winning face id (-1 where empty) and its perspective depth."""

    face_id: np.ndarray  # (h, w) int32
    depth: np.ndarray    # (h, w) float64, +inf where empty

    @property
    def width(self) -> int:
        return self.face_id.shape[1]

    @property
    def height(self) -> int:
        return self.face_id.shape[0]


def rasterize(
    mesh: TriangleMesh,
    view: CameraView,
    backface_culling: bool = True,
    near: float = 1e-9,
) -> FaceIdBuffer:
    """Render the mesh into the view as a face-id buffer with depth test."""
    w, h = view.width, view.height
    fid = np.full((h, w), -1, dtype=np.int32)
    depth = np.full((h, w), np.inf, dtype=np.float64)

    xc = view.world_to_camera(mesh.vertices)
    z = xc[:, 2]
    # guard against division by zero for vertices at/behind the camera plane;
    # faces touching them are clipped below anyway
    safe_z = np.where(z > near, z, 1.0)
    u = view.fx * xc[:, 0] / safe_z + view.cx
    v = view.fy * xc[:, 1] / safe_z + view.cy

    faces = mesh.faces
    in_front = np.all(z[faces] > near, axis=1)
    if backface_culling:
        to_cam = view.center - mesh.face_barycenters
        facing = np.einsum("ij,ij->i", mesh.face_normals, to_cam) > 0
        candidates = np.flatnonzero(in_front & facing)
    else:
        candidates = np.flatnonzero(in_front)

    su, sv = u[faces], v[faces]
    # quick reject of faces whose screen bbox misses the image
    on_screen = (
        (su.max(axis=1) >= 0) & (su.min(axis=1) < w)
        & (sv.max(axis=1) >= 0) & (sv.min(axis=1) < h)
    )
    candidates = candidates[on_screen[candidates]]

    for face_id in candidates:
        i0, i1, i2 = faces[face_id]
        p = np.array([[u[i0], v[i0]], [u[i1], v[i1]], [u[i2], v[i2]]])
        zf = np.array([z[i0], z[i1], z[i2]])
        area2 = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        if area2 == 0.0:
            continue
        if area2 < 0.0:  # normalize winding so edge functions are >= 0 inside
            p = p[[0, 2, 1]]
            zf = zf[[0, 2, 1]]
            area2 = -area2

        x_lo = max(int(np.floor(p[:, 0].min() - 0.5)), 0)
        x_hi = min(int(np.ceil(p[:, 0].max() - 0.5)), w - 1)
        y_lo = max(int(np.floor(p[:, 1].min() - 0.5)), 0)
        y_hi = min(int(np.ceil(p[:, 1].max() - 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1) + 0.5
        py = (np.arange(y_lo, y_hi + 1) + 0.5)[:, None]

        inside = np.ones((y_hi - y_lo + 1, x_hi - x_lo + 1), dtype=bool)
        lam = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            dx, dy = p[b, 0] - p[a, 0], p[b, 1] - p[a, 1]
            e = dx * (py - p[a, 1]) - dy * (px - p[a, 0])
            tie_ok = dy > 0 or (dy == 0 and dx < 0)  # top-left rule
            inside &= (e > 0) | ((e == 0) & tie_ok)
            lam.append(e / area2)
        if not inside.any():
            continue

        inv_z = lam[0] / zf[0] + lam[1] / zf[1] + lam[2] / zf[2]
        with np.errstate(divide="ignore"):
            z_pix = 1.0 / inv_z
        tile = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        win = inside & (z_pix < depth[tile])
        depth[tile][win] = z_pix[win]
        fid[tile][win] = face_id

    return FaceIdBuffer(fid, depth)


def face_visibility_label(
    buffer: FaceIdBuffer,
    mask: np.ndarray,
    min_pixels: int = 1,
    n_classes: int = 7,
) -> dict[int, int]:
    """Majority mask class over each face's pixel footprint.

    Faces covered by fewer than ``min_pixels`` pixels are absent from the
    result. Ties break toward the lower class id. The returned class id
    defines the face's one-hot vote for that view.
    """
    mask = np.asarray(mask)
    if mask.shape != buffer.face_id.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match buffer "
            f"{buffer.face_id.shape}"
        )
    if min_pixels < 1:
        raise ValueError("min_pixels must be >= 1")
    covered = buffer.face_id >= 0
    if not covered.any():
        return {}
    fids = buffer.face_id[covered].astype(np.int64)
    classes = mask[covered].astype(np.int64)
    if classes.min() < 0 or classes.max() >= n_classes:
        raise ValueError("mask contains values outside the taxonomy")
    counts = np.bincount(fids * n_classes + classes, minlength=(fids.max() + 1) * n_classes)
    counts = counts.reshape(-1, n_classes)
    totals = counts.sum(axis=1)
    keep = np.flatnonzero(totals >= min_pixels)
    majority = np.argmax(counts[keep], axis=1)  # first max -> lowest class id
    return {int(f): int(c) for f, c in zip(keep, majority)}


# -- segmentation mask I/O -----------------------------------------------------


def load_mask(path) -> np.ndarray:
    """Read an 8-bit single-channel mask whose values are taxonomy class ids."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.uint8)
    return arr


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path)
