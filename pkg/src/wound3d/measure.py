"""Clinical wound metrics on a reoriented, labeled mesh.

All lengths/areas are computed in model units; metric scaling is applied once
at report time. The perimeter is the arc length of a periodic smoothing
B-spline through the rim vertices; length and width are the largest geodesic
distances across the surface cover, width restricted to directions nearly
orthogonal to the length chord, the way a flexible tape would be laid across
the wound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import splev, splprep

from . import labels as lab
from .cover import SurfaceCover, _decimate_loop, eval_cover
from .labels import LabelField
from .mesh import TriangleMesh


@dataclass
class CurveFit:
    """Fitted cubic B-spline curve with an arc-length evaluator."""

    tck: tuple
    periodic: bool
    smoothing: float

    @property
    def control_points(self) -> np.ndarray:
        return np.asarray(self.tck[1]).T

    @property
    def degree(self) -> int:
        return int(self.tck[2])

    def point(self, s) -> np.ndarray:
        return np.asarray(splev(np.asarray(s), self.tck)).T

    def arc_length(self, a: float = 0.0, b: float = 1.0, rtol: float = 1e-8) -> float:
        return _spline_arc_length(self.tck, a, b, rtol)


def _spline_arc_length(tck, a=0.0, b=1.0, rtol=1e-8, max_depth=10) -> float:
    """Adaptive composite Gauss-Legendre quadrature of the speed |gamma'|."""
    nodes, weights = np.polynomial.legendre.leggauss(16)
    knots = np.asarray(tck[0])
    breaks = np.union1d(knots[(knots > a) & (knots < b)], [a, b])
    prev = None
    total = 0.0
    for depth in range(max_depth):
        ts, ws = [], []
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            edges = np.linspace(lo, hi, 2**depth + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1:] - edges[:-1])
            ts.append((mid[:, None] + half[:, None] * nodes).ravel())
            ws.append((half[:, None] * weights).ravel())
        t = np.concatenate(ts)
        der = np.asarray(splev(t, tck, der=1))
        total = float(np.sum(np.linalg.norm(der, axis=0) * np.concatenate(ws)))
        if prev is not None and abs(total - prev) <= rtol * max(abs(total), 1e-300):
            break
        prev = total
    return total


def perimeter(loop_points, alpha: float | None = None) -> tuple[float, CurveFit]:
    """Arc length of a periodic alpha-smooth cubic B-spline through loop points.

    ``alpha`` bounds the sum of squared fit residuals (0 interpolates). The
    default targets reconstruction-noise scale: (half the mean loop edge
    length)^2 times the number of loop points.
    """
    pts = np.asarray(loop_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 4:
        raise ValueError("perimeter needs at least 4 loop vertices")
    if alpha is None:
        alpha = default_alpha(pts)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    closed = np.vstack([pts, pts[:1]])
    tck, _ = splprep(closed.T, s=alpha, k=3, per=1)
    fit = CurveFit(tck, periodic=True, smoothing=float(alpha))
    return fit.arc_length(), fit


def default_alpha(loop_points) -> float:
    """Smoothing budget matched to the loop's apparent vertex noise.

    The per-vertex noise variance is estimated from second differences of the
    closed loop (a smooth curve contributes only O(h^2 kappa) there, noise
    contributes 6 sigma^2), and the budget is n * sigma^2, capped at
    (half the mean edge length)^2 per vertex so coarse clean rims are not
    over-smoothed.
    """
    pts = np.asarray(loop_points, dtype=np.float64)
    n = len(pts)
    second = np.roll(pts, -1, axis=0) - 2.0 * pts + np.roll(pts, 1, axis=0)
    sigma_sq = float(np.mean(np.sum(second**2, axis=1))) / 6.0
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    cap = (0.5 * float(seg.mean())) ** 2
    return n * min(sigma_sq, cap)


def geodesic_distance(
    cover: SurfaceCover,
    v_a,
    v_b,
    steps: int = 200,
    refine_rtol: float = 1e-4,
) -> float:
    """Approximate geodesic between two points across the surface cover.

    The straight (x, y) segment between the points is sampled, lifted onto the
    cover, and an open cubic B-spline is fitted through the lifted points; the
    spline's arc length is the distance. The sample count doubles until the
    length changes by less than ``refine_rtol`` relatively.
    """
    a = np.asarray(v_a, dtype=np.float64)[:2]
    b = np.asarray(v_b, dtype=np.float64)[:2]
    if np.linalg.norm(b - a) < 1e-12:
        return 0.0
    prev = None
    n = max(int(steps), 4)
    for _ in range(6):
        length = _lifted_segment_length(cover, a, b, n)
        if prev is not None and abs(length - prev) <= refine_rtol * max(length, 1e-300):
            return length
        prev = length
        n *= 2
    return length


def _lifted_segment_length(cover, a, b, n) -> float:
    t = np.linspace(0.0, 1.0, n)
    xy = a[None, :] * (1.0 - t[:, None]) + b[None, :] * t[:, None]
    z = eval_cover(cover, xy[:, 0], xy[:, 1])
    tck, _ = splprep([xy[:, 0], xy[:, 1], z], s=0.0, k=3)
    return _spline_arc_length(tck, rtol=1e-8)


def _pair_polyline_lengths(cover, xy, pairs, samples: int = 9) -> np.ndarray:
    """Cheap lifted-polyline pair lengths used to rank candidate pairs."""
    t = np.linspace(0.0, 1.0, samples)
    a = xy[pairs[:, 0]][:, None, :]
    b = xy[pairs[:, 1]][:, None, :]
    seg = a * (1.0 - t[None, :, None]) + b * t[None, :, None]
    z = eval_cover(cover, seg[..., 0].ravel(), seg[..., 1].ravel())
    pts = np.concatenate([seg, z.reshape(seg.shape[:2])[..., None]], axis=2)
    return np.linalg.norm(np.diff(pts, axis=1), axis=2).sum(axis=1)


def length_width(
    loop_points,
    cover: SurfaceCover,
    eps_angle: float = 0.0872,
    max_sites: int = 400,
    steps: int = 200,
    n_exact: int = 32,
):
    """Wound length and width as geodesics between perimeter vertex pairs.

    Length maximizes the cover geodesic over all pairs of (decimated)
    perimeter vertices. Width maximizes it over pairs whose (x, y) chord is
    within ``eps_angle`` of orthogonal to the length chord (|cos| <=
    eps_angle). Pairs are ranked with a cheap lifted-polyline surrogate and
    only the best ``n_exact`` are measured exactly.

    Returns ((length, (p_start, p_end)), (width, (p_start, p_end))).
    """
    pts = np.asarray(loop_points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise ValueError("length/width needs at least 3 perimeter vertices")
    pts = _decimate_loop(pts, max_sites)
    xy = pts[:, :2]
    n = len(pts)
    ii, jj = np.triu_indices(n, k=1)
    pairs = np.column_stack([ii, jj])
    surrogate = _pair_polyline_lengths(cover, xy, pairs)

    def exact_best(candidate_rows):
        best = (-1.0, None)
        for row in candidate_rows:
            i, j = pairs[row]
            d = geodesic_distance(cover, pts[i], pts[j], steps)
            if d > best[0]:
                best = (d, (i, j))
        return best

    top_l = np.argsort(surrogate)[::-1][:n_exact]
    length, (la, lb) = exact_best(top_l)

    chord = xy[lb] - xy[la]
    chord /= np.linalg.norm(chord)
    d = xy[pairs[:, 1]] - xy[pairs[:, 0]]
    norms = np.linalg.norm(d, axis=1)
    with np.errstate(invalid="ignore"):
        cosang = np.abs(d @ chord) / norms
    ok = np.flatnonzero((norms > 0) & (cosang <= eps_angle))
    if ok.size == 0:
        raise ValueError(
            "no perimeter pair satisfies the angular constraint; "
            "increase eps_angle"
        )
    top_w = ok[np.argsort(surrogate[ok])[::-1][:n_exact]]
    width, (wa, wb) = exact_best(top_w)

    if width > length:  # width candidates are a subset of the length search
        length, (la, lb) = width, (wa, wb)
    return (length, (pts[la], pts[lb])), (width, (pts[wa], pts[wb]))


def surface_areas(
    mesh: TriangleMesh, label_field: LabelField, scale: float = 1.0
) -> tuple[float, float]:
    """Wound-bed and periwound face-area sums, scaled by ``scale`` squared."""
    label_field.validate_for(mesh)
    areas = mesh.face_areas
    wound = float(areas[label_field.mask(lab.WOUND_BED_IDS)].sum()) * scale**2
    peri = float(areas[label_field.mask(lab.PERIWOUND)].sum()) * scale**2
    return wound, peri


@dataclass
class DepthStats:
    min_depth: float
    max_depth: float
    mean_depth: float
    max_depression: float  # = max(0, -min_depth)
    max_protrusion: float  # = max(0,  max_depth)


def depth_field(
    mesh: TriangleMesh, wound_faces, cover: SurfaceCover
) -> tuple[np.ndarray, np.ndarray, DepthStats]:
    """Signed vertical distance of wound vertices to the surface cover.

    The mesh must already be in the reference frame. Positive depth is a
    protrusion above the cover, negative a depression below it. Returns
    (vertex_ids, depths, stats).
    """
    wound_faces = np.asarray(wound_faces, dtype=np.int64)
    if wound_faces.size == 0:
        raise ValueError("no wound faces")
    vertex_ids = np.unique(mesh.faces[wound_faces])
    v = mesh.vertices[vertex_ids]
    depths = v[:, 2] - eval_cover(cover, v[:, 0], v[:, 1])
    stats = DepthStats(
        min_depth=float(depths.min()),
        max_depth=float(depths.max()),
        mean_depth=float(depths.mean()),
        max_depression=float(max(0.0, -depths.min())),
        max_protrusion=float(max(0.0, depths.max())),
    )
    return vertex_ids, depths, stats


def tissue_composition(
    label_field: LabelField, mesh: TriangleMesh, faces=None
) -> dict[str, float]:
    """Area fraction of each tissue class within the wound bed.

    Wound-bed faces still carrying the generic label are reported under
    ``unclassified``. Fractions sum to 1. ``faces`` restricts the computation
    to one wound component.
    """
    label_field.validate_for(mesh)
    labels = label_field.face_labels
    areas = mesh.face_areas
    if faces is not None:
        sel = np.zeros(mesh.n_faces, dtype=bool)
        sel[np.asarray(faces, dtype=np.int64)] = True
    else:
        sel = np.ones(mesh.n_faces, dtype=bool)
    wound_sel = sel & np.isin(labels, lab.WOUND_BED_IDS)
    total = float(areas[wound_sel].sum())
    if total <= 0:
        raise ValueError("zero wound-bed area")
    out = {}
    for class_id in lab.TISSUE_IDS:
        name = label_field.taxonomy.name_of(class_id)
        out[name] = float(areas[wound_sel & (labels == class_id)].sum()) / total
    out["unclassified"] = float(areas[wound_sel & (labels == lab.WOUND_BED)].sum()) / total
    return out


@dataclass
class WoundMetrics:
    """All metrics for one wound component, plus scale provenance."""

    perimeter: float
    length: float
    length_endpoints: tuple
    width: float
    width_endpoints: tuple
    wound_bed_area: float
    periwound_area: float
    depth: DepthStats
    tissue_fractions: dict = field(default_factory=dict)
    scale_factor: float = 1.0
    scaled: bool = False

    def to_dict(self) -> dict:
        return {
            "perimeter_mm": self.perimeter,
            "length_mm": self.length,
            "length_endpoints": [[float(x) for x in p] for p in self.length_endpoints],
            "width_mm": self.width,
            "width_endpoints": [[float(x) for x in p] for p in self.width_endpoints],
            "wound_bed_area_mm2": self.wound_bed_area,
            "periwound_area_mm2": self.periwound_area,
            "depth_mm": {
                "min": self.depth.min_depth,
                "max": self.depth.max_depth,
                "mean": self.depth.mean_depth,
                "max_depression": self.depth.max_depression,
                "max_protrusion": self.depth.max_protrusion,
            },
            "tissue_fractions": dict(sorted(self.tissue_fractions.items())),
            "scale_mm_per_unit": self.scale_factor,
            "scaled": self.scaled,
        }
