"""Thin-plate-spline surface cover: the virtual pre-injury skin surface.

The cover f(x, y) is fitted to the wound perimeter vertices in the reference
frame and interpolates (or smooths, for lambda > 0) their heights with the
kernel phi(r) = r^2 log r. A first-order polynomial term is included with the
usual orthogonality side conditions, since a bare kernel expansion cannot
represent a flat sloped skin patch and would bias depth; ``strict=True``
drops the polynomial for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SurfaceCover:
    centers: np.ndarray      # (n, 2) kernel sites
    rbf_weights: np.ndarray  # (n,)
    affine: np.ndarray       # (a0, ax, ay); zeros in strict mode
    smoothing: float
    strict: bool = False


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # phi(r) = r^2 log r = 0.5 * r^2 log r^2; the additive floor keeps log(0)
    # finite and the r^2 factor makes phi(0) = 0 exactly
    return 0.5 * r2 * np.log(r2 + 1e-300)


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def _decimate_loop(points: np.ndarray, max_sites: int) -> np.ndarray:
    """Arc-length-uniform subsample of an ordered loop of points."""
    if len(points) <= max_sites:
        return points
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], max_sites, endpoint=False)
    idx = np.unique(np.searchsorted(s, targets))
    return points[np.clip(idx, 0, len(points) - 1)]


def fit_cover(
    perimeter_points,
    smoothing: float | None = None,
    max_sites: int = 400,
    strict: bool = False,
) -> SurfaceCover:
    """Fit the cover to 3D perimeter points given in the reference frame.

    ``smoothing`` is the ridge term added to the kernel diagonal; None picks
    1e-6 times the squared site bounding radius, a tiny amount that keeps the
    solve well conditioned on noisy reconstructed perimeters. Zero smoothing
    interpolates exactly and rejects duplicate (x, y) sites with conflicting
    heights. Ordered loops longer than ``max_sites`` are decimated uniformly
    by arc length first.
    """
    pts = np.asarray(perimeter_points, dtype=np.float64).reshape(-1, 3)
    pts = _decimate_loop(pts, max_sites)
    xy, z = pts[:, :2], pts[:, 2]

    # merge duplicate (x, y) sites; conflicting heights need smoothing > 0
    span = max(np.ptp(xy, axis=0).max(), 1e-300)
    rounded = np.round(xy / (1e-12 * span)).astype(np.int64)
    _, first, inv = np.unique(rounded, axis=0, return_index=True, return_inverse=True)
    if len(first) < len(xy):
        groups = len(first)
        z_min = np.full(groups, np.inf)
        z_max = np.full(groups, -np.inf)
        np.minimum.at(z_min, inv, z)
        np.maximum.at(z_max, inv, z)
        if smoothing == 0 and (z_max - z_min).max() > 1e-9 * span:
            raise ValueError(
                "duplicate (x, y) sites with conflicting heights; "
                "refit with smoothing > 0"
            )
        z_sum = np.zeros(groups)
        cnt = np.zeros(groups)
        np.add.at(z_sum, inv, z)
        np.add.at(cnt, inv, 1.0)
        xy = xy[first]
        z = z_sum / cnt
    n = len(xy)
    if n < 3:
        raise ValueError("need at least 3 distinct (x, y) sites")
    centered = xy - xy.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise ValueError("perimeter sites are collinear in (x, y)")

    if smoothing is None:
        radius = np.linalg.norm(centered, axis=1).max()
        smoothing = 1e-6 * radius * radius
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")

    d2 = _pairwise_sq(xy, xy)
    k = _tps_kernel(d2) + smoothing * np.eye(n)

    if strict:
        weights, *_ = np.linalg.lstsq(k, z, rcond=None)
        affine = np.zeros(3)
    else:
        p = np.hstack([np.ones((n, 1)), xy])
        a = np.zeros((n + 3, n + 3))
        a[:n, :n] = k
        a[:n, n:] = p
        a[n:, :n] = p.T
        rhs = np.concatenate([z, np.zeros(3)])
        sol = np.linalg.solve(a, rhs)
        weights, affine = sol[:n], sol[n:]

    return SurfaceCover(xy, weights, affine, float(smoothing), strict)


def eval_cover(cover: SurfaceCover, x, y) -> np.ndarray | float:
    """Cover height f(x, y); broadcasts over array inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scalar = x.ndim == 0 and y.ndim == 0
    pts = np.stack(np.broadcast_arrays(x, y), axis=-1).reshape(-1, 2)
    out = np.empty(len(pts))
    a0, ax, ay = cover.affine
    # chunked so large query batches stay within memory
    step = max(1, int(2e7) // max(len(cover.centers), 1))
    for lo in range(0, len(pts), step):
        chunk = pts[lo:lo + step]
        d2 = _pairwise_sq(chunk, cover.centers)
        out[lo:lo + step] = _tps_kernel(d2) @ cover.rbf_weights
    out += a0 + ax * pts[:, 0] + ay * pts[:, 1]
    if scalar:
        return float(out[0])
    return out.reshape(np.broadcast_shapes(x.shape, y.shape))


def eval_grad(cover: SurfaceCover, x, y) -> tuple:
    """Analytic gradient (df/dx, df/dy); broadcasts over array inputs."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scalar = x.ndim == 0 and y.ndim == 0
    pts = np.stack(np.broadcast_arrays(x, y), axis=-1).reshape(-1, 2)
    dx = pts[:, None, 0] - cover.centers[None, :, 0]
    dy = pts[:, None, 1] - cover.centers[None, :, 1]
    r2 = dx * dx + dy * dy
    # d/dx [r^2 log r] = (x - xi) (2 log r + 1) -> 0 as r -> 0
    factor = np.zeros_like(r2)
    pos = r2 > 0
    factor[pos] = np.log(r2[pos]) + 1.0
    gx = (dx * factor) @ cover.rbf_weights + cover.affine[1]
    gy = (dy * factor) @ cover.rbf_weights + cover.affine[2]
    if scalar:
        return float(gx[0]), float(gy[0])
    shape = np.broadcast_shapes(x.shape, y.shape)
    return gx.reshape(shape), gy.reshape(shape)
