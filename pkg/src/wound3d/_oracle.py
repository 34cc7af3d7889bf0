"""Independent reference computations for synthetic wound scenes.

Everything here is deliberately brute force (dense polylines, midpoint
quadrature, a self-contained thin-plate solve) and shares no code with the
measurement modules, so tests comparing the two are not self-referential.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ellipe


def ellipse_perimeter(semi_a: float, semi_b: float) -> float:
    """Exact ellipse circumference via the complete elliptic integral."""
    a, b = max(semi_a, semi_b), min(semi_a, semi_b)
    m = 1.0 - (b / a) ** 2
    return float(4.0 * a * ellipe(m))


def spherical_cap_area(rim_radius: float, depth: float) -> float:
    """Lateral area of a spherical cap with given rim radius and apex depth."""
    return float(np.pi * (rim_radius**2 + depth**2))


def polyline_length(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=np.float64)
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def rim_perimeter(surface_map, rim_rho: float, n: int = 200_000) -> float:
    """Length of the rim curve by dense polyline sampling."""
    theta = np.linspace(0.0, 2.0 * np.pi, n + 1)
    return polyline_length(surface_map(np.full_like(theta, rim_rho), theta))


def patch_area(surface_map, rho_max: float, n_r: int = 1200, n_t: int = 1200) -> float:
    """Area of the surface patch rho <= rho_max by midpoint quadrature."""
    return _quadrature_area(surface_map, rho_max, n_r, n_t).sum()


def sector_area_fractions(surface_map, rho_max: float, boundaries, n_r=800, n_t=1440):
    """Area fraction of each azimuthal sector [b_i, b_{i+1}) of the patch."""
    cells = _quadrature_area(surface_map, rho_max, n_r, n_t)
    theta_mid = (np.arange(n_t) + 0.5) * 2.0 * np.pi / n_t
    total = cells.sum()
    fractions = []
    for lo, hi in zip(boundaries[:-1], boundaries[1:]):
        mask = (theta_mid >= lo) & (theta_mid < hi)
        fractions.append(float(cells[:, mask].sum() / total))
    return fractions


def _quadrature_area(surface_map, rho_max, n_r, n_t):
    rho = (np.arange(n_r) + 0.5) * rho_max / n_r
    theta = (np.arange(n_t) + 0.5) * 2.0 * np.pi / n_t
    rr, tt = np.meshgrid(rho, theta, indexing="ij")
    h_r = 0.5 * rho_max / n_r
    h_t = 0.5 * 2.0 * np.pi / n_t
    d_rho = (surface_map(rr + h_r, tt) - surface_map(rr - h_r, tt)) / (2 * h_r)
    d_theta = (surface_map(rr, tt + h_t) - surface_map(rr, tt - h_t)) / (2 * h_t)
    jac = np.linalg.norm(np.cross(d_rho, d_theta), axis=-1)
    return jac * (rho_max / n_r) * (2.0 * np.pi / n_t)


class ThinPlateReference:
    """Minimal thin-plate interpolant used only as a test reference."""

    def __init__(self, sites_xyz: np.ndarray):
        pts = np.asarray(sites_xyz, dtype=np.float64)
        self.xy = pts[:, :2]
        n = len(pts)
        d2 = _pairwise_sq(self.xy, self.xy)
        k = self._phi(d2) + 1e-10 * np.eye(n)
        p = np.hstack([np.ones((n, 1)), self.xy])
        a = np.zeros((n + 3, n + 3))
        a[:n, :n] = k
        a[:n, n:] = p
        a[n:, :n] = p.T
        sol = np.linalg.solve(a, np.concatenate([pts[:, 2], np.zeros(3)]))
        self.w = sol[:n]
        self.c = sol[n:]

    @staticmethod
    def _phi(d2):
        # 0.5 * d2 * log(d2); the additive floor makes log(0) finite and the
        # factor d2 = 0 kills it, so phi(0) = 0 exactly
        return 0.5 * d2 * np.log(d2 + 1e-300)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64).reshape(-1, 2)
        d2 = _pairwise_sq(q, self.xy)
        return self._phi(d2) @ self.w + self.c[0] + q @ self.c[1:]


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distances via the expansion |a|^2 + |b|^2 - 2 a.b (BLAS-bound)."""
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def lifted_pair_lengths(tps, starts_xy, ends_xy, n_samples: int) -> np.ndarray:
    """Lengths of straight (x, y) chords lifted onto a thin-plate surface."""
    t = np.linspace(0.0, 1.0, n_samples)
    lengths = np.empty(len(starts_xy))
    chunk = max(1, 20_000_000 // (n_samples * max(len(tps.xy), 1)))
    for lo in range(0, len(starts_xy), chunk):
        a = starts_xy[lo:lo + chunk][:, None, :]
        b = ends_xy[lo:lo + chunk][:, None, :]
        xy = a * (1 - t[None, :, None]) + b * t[None, :, None]
        z = tps(xy.reshape(-1, 2)).reshape(xy.shape[:2])
        pts = np.concatenate([xy, z[..., None]], axis=2)
        lengths[lo:lo + chunk] = np.linalg.norm(np.diff(pts, axis=1), axis=2).sum(axis=1)
    return lengths


def rim_thin_plate(rim_xyz: np.ndarray, max_sites: int = 128) -> ThinPlateReference:
    rim = np.asarray(rim_xyz, dtype=np.float64)
    if len(rim) > max_sites:
        rim = rim[np.linspace(0, len(rim), max_sites, endpoint=False).astype(int)]
    return ThinPlateReference(rim)


def lifted_diameters(rim_xyz: np.ndarray, eps_angle: float = 0.0872, tps=None):
    """Max lifted-chord length over rim pairs, and the max under the
    near-orthogonality constraint relative to the winning chord.

    Scans near-diametral pairs coarsely, then refines the best candidates
    with dense sampling. Returns (length, width).
    """
    rim = np.asarray(rim_xyz, dtype=np.float64)
    if tps is None:
        tps = rim_thin_plate(rim)
    n = len(rim)
    window = max(n // 6, 8)
    i = np.repeat(np.arange(n), 2 * window + 1)
    j = (i + n // 2 + np.tile(np.arange(-window, window + 1), n)) % n
    keep = i < j
    i, j = i[keep], j[keep]
    xy = rim[:, :2]

    coarse = lifted_pair_lengths(tps, xy[i], xy[j], 33)
    top = np.argsort(coarse)[::-1][:24]
    fine = lifted_pair_lengths(tps, xy[i[top]], xy[j[top]], 4096)
    best = top[np.argmax(fine)]
    length = float(fine.max())

    chord = xy[j[best]] - xy[i[best]]
    chord /= np.linalg.norm(chord)
    d = xy[j] - xy[i]
    norms = np.linalg.norm(d, axis=1)
    ok = np.flatnonzero((norms > 0) & (np.abs(d @ chord) / norms <= eps_angle))
    if ok.size == 0:
        raise ValueError("no rim pair satisfies the width constraint")
    top_w = ok[np.argsort(coarse[ok])[::-1][:24]]
    fine_w = lifted_pair_lengths(tps, xy[i[top_w]], xy[j[top_w]], 4096)
    width = float(fine_w.max())
    return length, width


def max_depression(
    surface_map, rim_rho: float, rim_xyz: np.ndarray, n_grid: int = 300, tps=None
) -> float:
    """Largest vertical drop of the patch below its rim-fitted thin plate."""
    if tps is None:
        tps = rim_thin_plate(rim_xyz)
    rho = np.linspace(0.0, rim_rho, n_grid + 1)[1:]
    theta = np.linspace(0.0, 2.0 * np.pi, 2 * n_grid, endpoint=False)
    rr, tt = np.meshgrid(rho, theta, indexing="ij")
    pts = surface_map(rr, tt).reshape(-1, 3)
    pts = np.vstack([pts, surface_map(np.zeros(1), np.zeros(1)).reshape(-1, 3)])
    drop = tps(pts[:, :2]) - pts[:, 2]
    return float(drop.max())
