"""Depth-map and error-map renderings: colored meshes and topographic images.

Colors are produced by small piecewise-linear ramps defined here rather than
an external styling library, so renders are byte-reproducible.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .mesh import TriangleMesh

_GRAY = np.array([205, 205, 205], dtype=np.uint8)
_BACKGROUND = (235, 235, 235)


def diverging_colormap(t) -> np.ndarray:
    """Blue-white-red ramp over t in [-1, 1], anchored at white for t = 0."""
    t = np.clip(np.asarray(t, dtype=np.float64), -1.0, 1.0)
    blue = np.array([38, 77, 190.0])
    white = np.array([255, 255, 255.0])
    red = np.array([180, 22, 28.0])
    out = np.empty(t.shape + (3,))
    neg = t < 0
    out[neg] = white + (-t[neg])[..., None] * (blue - white)
    out[~neg] = white + t[~neg][..., None] * (red - white)
    return np.round(out).astype(np.uint8)


def ramp_colormap(t) -> np.ndarray:
    """Blue-cyan-yellow-red ramp over t in [0, 1], used for error maps."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    stops = np.array(
        [[30, 60, 180.0], [60, 200, 220.0], [250, 230, 60.0], [200, 30, 30.0]]
    )
    pos = t * (len(stops) - 1)
    lo = np.minimum(pos.astype(int), len(stops) - 2)
    frac = (pos - lo)[..., None]
    out = stops[lo] * (1 - frac) + stops[lo + 1] * frac
    return np.round(out).astype(np.uint8)


def depth_colored_mesh(
    mesh: TriangleMesh, vertex_ids, depths, vmax: float | None = None
) -> TriangleMesh:
    """Copy of the mesh with wound vertices colored by signed depth.

    The map is symmetric about zero depth; unmeasured vertices stay gray.
    """
    depths = np.asarray(depths, dtype=np.float64)
    if vmax is None:
        vmax = float(np.abs(depths).max()) if depths.size else 0.0
    vmax = max(vmax, 1e-12)
    colors = np.tile(_GRAY, (mesh.n_vertices, 1))
    colors[np.asarray(vertex_ids, dtype=np.int64)] = diverging_colormap(depths / vmax)
    return TriangleMesh(mesh.vertices, mesh.faces, colors)


def error_colored_mesh(mesh: TriangleMesh, vertex_errors, vmax: float = 5.0) -> TriangleMesh:
    """Copy of the mesh with vertices colored by per-vertex error in [0, vmax]."""
    errors = np.asarray(vertex_errors, dtype=np.float64)
    if errors.shape != (mesh.n_vertices,):
        raise ValueError("vertex_errors must have one value per vertex")
    return TriangleMesh(mesh.vertices, mesh.faces, ramp_colormap(errors / vmax))


def _ortho_depth_grid(mesh, wound_faces, vertex_ids, depths, resolution):
    """Top-down orthographic sampling of interpolated vertex depth."""
    wound_faces = np.asarray(wound_faces, dtype=np.int64)
    depth_of = np.full(mesh.n_vertices, np.nan)
    depth_of[np.asarray(vertex_ids, dtype=np.int64)] = depths

    pts = mesh.vertices[np.unique(mesh.faces[wound_faces])]
    lo = pts[:, :2].min(axis=0)
    hi = pts[:, :2].max(axis=0)
    span = hi - lo
    pad = 0.03 * span.max()
    lo, hi = lo - pad, hi + pad
    span = hi - lo
    step = span.max() / resolution
    w = max(int(np.ceil(span[0] / step)), 1)
    h = max(int(np.ceil(span[1] / step)), 1)

    grid = np.full((h, w), np.nan)
    zbuf = np.full((h, w), -np.inf)
    verts = mesh.vertices
    for face in mesh.faces[wound_faces]:
        tri = verts[face]
        gx = (tri[:, 0] - lo[0]) / step
        gy = (tri[:, 1] - lo[1]) / step
        area2 = (gx[1] - gx[0]) * (gy[2] - gy[0]) - (gx[2] - gx[0]) * (gy[1] - gy[0])
        if area2 == 0.0:
            continue
        x_lo = max(int(np.floor(gx.min() - 0.5)), 0)
        x_hi = min(int(np.ceil(gx.max() - 0.5)), w - 1)
        y_lo = max(int(np.floor(gy.min() - 0.5)), 0)
        y_hi = min(int(np.ceil(gy.max() - 0.5)), h - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        px = np.arange(x_lo, x_hi + 1) + 0.5
        py = (np.arange(y_lo, y_hi + 1) + 0.5)[:, None]
        lam = []
        for a, b in ((1, 2), (2, 0), (0, 1)):
            e = (gx[b] - gx[a]) * (py - gy[a]) - (gy[b] - gy[a]) * (px - gx[a])
            lam.append(e / area2)
        inside = (lam[0] >= 0) & (lam[1] >= 0) & (lam[2] >= 0)
        if area2 < 0:
            inside = (lam[0] <= 0) & (lam[1] <= 0) & (lam[2] <= 0)
        if not inside.any():
            continue
        z = lam[0] * tri[0, 2] + lam[1] * tri[1, 2] + lam[2] * tri[2, 2]
        val = lam[0] * depth_of[face[0]] + lam[1] * depth_of[face[1]] + lam[2] * depth_of[face[2]]
        tile = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        win = inside & (z > zbuf[tile])
        zbuf[tile][win] = z[win]
        grid[tile][win] = val[win]
    return grid


def topographic_depth_image(
    mesh: TriangleMesh,
    wound_faces,
    vertex_ids,
    depths,
    resolution: int = 256,
    unit: str = "mm",
) -> Image.Image:
    """Top-down (+z) map of wound depth with an embedded scale-bar legend."""
    wound_faces = np.asarray(wound_faces, dtype=np.int64)
    if wound_faces.size == 0:
        raise ValueError("no wound faces")
    depths = np.asarray(depths, dtype=np.float64)
    vmax = max(float(np.abs(depths).max()) if depths.size else 0.0, 1e-12)
    grid = _ortho_depth_grid(mesh, wound_faces, vertex_ids, depths, resolution)

    h, w = grid.shape
    rgb = np.full((h, w, 3), _BACKGROUND, dtype=np.uint8)
    valid = np.isfinite(grid)
    rgb[valid] = diverging_colormap(grid[valid] / vmax)
    # y up in the measurement frame -> row 0 at the top of the image
    rgb = rgb[::-1]

    legend_w = 96
    img = Image.new("RGB", (w + legend_w, h), _BACKGROUND)
    img.paste(Image.fromarray(rgb), (0, 0))

    bar_x, bar_w = w + 16, 18
    bar_top, bar_bot = 12, h - 28
    ts = np.linspace(1.0, -1.0, max(bar_bot - bar_top, 2))
    bar = np.repeat(diverging_colormap(ts)[:, None, :], bar_w, axis=1)
    img.paste(Image.fromarray(bar), (bar_x, bar_top))

    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    mid = (bar_top + bar_bot) // 2
    draw.text((bar_x + bar_w + 4, bar_top - 4), f"+{vmax:.2f}", fill=(20, 20, 20), font=font)
    draw.text((bar_x + bar_w + 4, mid - 5), "0.00", fill=(20, 20, 20), font=font)
    draw.text((bar_x + bar_w + 4, bar_bot - 6), f"-{vmax:.2f}", fill=(20, 20, 20), font=font)
    draw.text((bar_x - 4, bar_bot + 8), f"depth ({unit})", fill=(20, 20, 20), font=font)
    return img


def depth_maps(
    mesh: TriangleMesh,
    wound_faces,
    vertex_ids,
    depths,
    mesh_path=None,
    image_path=None,
    resolution: int = 256,
    unit: str = "mm",
):
    """Write the colored-mesh and topographic-image depth visualizations."""
    from .mesh import save_mesh

    wound_faces = np.asarray(wound_faces, dtype=np.int64)
    if wound_faces.size == 0:
        raise ValueError("no wound faces")
    colored = depth_colored_mesh(mesh, vertex_ids, depths)
    image = topographic_depth_image(mesh, wound_faces, vertex_ids, depths, resolution, unit)
    if mesh_path is not None:
        save_mesh(mesh_path, colored)
    if image_path is not None:
        image.save(image_path)
    return colored, image
