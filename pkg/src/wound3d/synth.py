"""Synthetic digital wound scenes with exact ground truth.

A scene is a crater (spherical-cap or Gaussian depression, optionally
stretched along x) carved into a plane or cylinder patch, tessellated in
polar rings so the crater rim and the periwound boundary are exact vertex
rings. The generator attaches closed-form ground truth where it exists
(plane bases) and otherwise falls back to the dense quadrature oracle in
``_oracle``, which shares no code with the measurement modules.

Scenes are deterministic under (spec, seed): geometry never depends on the
seed, while camera placement and marker position are seed-jittered so the
rendered masks vary run to run.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _oracle as oracle
from . import labels as lab
from .camera import CameraView, load_views, project, save_views
from .labels import LabelField, LabelTaxonomy, load_labels, save_labels
from .mesh import TriangleMesh, load_mesh, save_mesh
from .raster import load_mask, save_mask
from .scale import MarkerDetections, load_detections, save_detections


@dataclass(frozen=True)
class SceneSpec:
    base: str = "plane"              # "plane" | "cylinder"
    cylinder_radius: float = 50.0    # mm
    extent: float = 32.0             # patch radius in parameter space, mm
    resolution: int = 48             # angular vertex count; radial density follows
    profile: str = "spherical_cap"   # | "gaussian"
    crater_radius: float = 10.0      # mm, rim radius in parameter space
    crater_depth: float = 5.0        # mm
    ellipticity: float = 1.0         # x axis stretched by this factor
    periwound_width: float = 5.0     # mm
    tissue_fractions: tuple = (("granulation", 0.5), ("slough", 0.5))
    n_views: int = 8
    orbit_radius: float = 130.0      # mm
    orbit_elevation_deg: float = 55.0
    image_size: tuple = (480, 480)
    marker: bool = True
    marker_side: float = 20.0        # mm
    model_scale: float = 2.0         # mm per model unit
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tissue_fractions"] = [list(p) for p in self.tissue_fractions]
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if "tissue_fractions" in d:
            d["tissue_fractions"] = tuple(tuple(p) for p in d["tissue_fractions"])
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        return cls(**d)


@dataclass
class GroundTruth:
    perimeter_mm: float
    length_mm: float
    width_mm: float
    wound_bed_area_mm2: float
    max_depth_mm: float
    tissue_fractions: dict
    scale_mm_per_unit: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    mesh: TriangleMesh           # model units
    labels: LabelField           # ground-truth face labels
    views: list
    masks: dict                  # view_id -> (h, w) uint8
    detections: list | None
    gt: GroundTruth


# -- parametric surface --------------------------------------------------------


def _height_profile(spec: SceneSpec, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    r_c, d = spec.crater_radius, spec.crater_depth
    h = np.zeros_like(rho)
    inside = rho < r_c
    if d == 0:
        return h
    if spec.profile == "spherical_cap":
        r_s = (r_c**2 + d**2) / (2.0 * d)
        h[inside] = r_s - d - np.sqrt(r_s**2 - rho[inside] ** 2)
    elif spec.profile == "gaussian":
        sigma = r_c / 2.0
        floor = np.exp(-r_c**2 / (2 * sigma**2))
        h[inside] = -d * (np.exp(-rho[inside] ** 2 / (2 * sigma**2)) - floor) / (1 - floor)
    else:
        raise ValueError(f"unknown crater profile {spec.profile!r}")
    return h


def surface_map(spec: SceneSpec):
    """Vectorized map (rho, theta) -> 3D points in mm, crater center at origin."""

    def fn(rho, theta):
        rho = np.asarray(rho, dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        rho, theta = np.broadcast_arrays(rho, theta)
        u = spec.ellipticity * rho * np.cos(theta)
        v = rho * np.sin(theta)
        h = _height_profile(spec, rho)
        if spec.base == "plane":
            return np.stack([u, v, h], axis=-1)
        if spec.base == "cylinder":
            r = spec.cylinder_radius
            ang = v / r
            base = np.stack([u, r * np.sin(ang), r * np.cos(ang) - r], axis=-1)
            normal = np.stack([np.zeros_like(ang), np.sin(ang), np.cos(ang)], axis=-1)
            return base + normal * h[..., None]
        raise ValueError(f"unknown base surface {spec.base!r}")

    return fn


def _ring_radii(spec: SceneSpec) -> np.ndarray:
    r_c, w_p, extent = spec.crater_radius, spec.periwound_width, spec.extent
    n_in = max(4, spec.resolution // 2)
    dr = r_c / n_in
    inner = np.linspace(dr, r_c, n_in)
    n_peri = max(1, round(w_p / dr))
    peri = r_c + np.arange(1, n_peri + 1) * (w_p / n_peri)
    rest = extent - (r_c + w_p)
    n_out = max(1, round(rest / dr))
    outer = r_c + w_p + np.arange(1, n_out + 1) * (rest / n_out)
    return np.concatenate([inner, peri, outer])


def _check_spec(spec: SceneSpec) -> None:
    if spec.crater_radius <= 0 or spec.crater_depth < 0:
        raise ValueError("crater radius must be positive and depth non-negative")
    if spec.crater_radius + spec.periwound_width >= spec.extent:
        raise ValueError("crater plus periwound does not fit on the base patch")
    if spec.ellipticity <= 0:
        raise ValueError("ellipticity must be positive")
    if spec.base == "cylinder":
        arc_limit = spec.cylinder_radius * np.pi * 0.45
        if spec.extent >= arc_limit:
            raise ValueError("patch wraps too far around the cylinder")
    if spec.n_views < 1:
        raise ValueError("need at least one view")
    if spec.orbit_radius <= 1.2 * spec.extent * max(1.0, spec.ellipticity):
        raise ValueError("camera orbit too close; cameras cannot see the wound")
    fracs = [f for _, f in spec.tissue_fractions]
    if fracs and (min(fracs) < 0 or abs(sum(fracs) - 1.0) > 1e-9):
        raise ValueError("tissue fractions must be non-negative and sum to 1")
    if spec.model_scale <= 0:
        raise ValueError("model_scale must be positive")


# -- generation ------------------------------------------------------------------


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Build the mesh, GT labels, cameras, masks, detections, and GT metrics."""
    _check_spec(spec)
    rng = np.random.default_rng(spec.seed)
    smap = surface_map(spec)
    taxonomy = LabelTaxonomy()

    # polar tessellation: center vertex + rings
    radii = _ring_radii(spec)
    n_theta = max(12, int(spec.resolution))
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    rho_v = np.concatenate([[0.0], np.repeat(radii, n_theta)])
    theta_v = np.concatenate([[0.0], np.tile(theta, len(radii))])
    vertices_mm = smap(rho_v, theta_v)

    def ring_vertex(ring: int, k: int) -> int:
        return 1 + ring * n_theta + (k % n_theta)

    faces = []
    for k in range(n_theta):  # center fan
        faces.append([0, ring_vertex(0, k), ring_vertex(0, k + 1)])
    for ring in range(len(radii) - 1):
        for k in range(n_theta):
            a = ring_vertex(ring, k)
            b = ring_vertex(ring, k + 1)
            c = ring_vertex(ring + 1, k + 1)
            d = ring_vertex(ring + 1, k)
            faces.append([a, d, c])
            faces.append([a, c, b])
    faces = np.asarray(faces, dtype=np.int64)

    mesh = TriangleMesh(vertices_mm / spec.model_scale, faces)

    # ground-truth labels from parameter-space face barycenters
    p2 = np.stack([rho_v * np.cos(theta_v), rho_v * np.sin(theta_v)], axis=1)
    bary = p2[faces].mean(axis=1)
    rho_b = np.linalg.norm(bary, axis=1)
    phi_b = np.mod(np.arctan2(bary[:, 1], bary[:, 0]), 2.0 * np.pi)
    labels = np.zeros(len(faces), dtype=np.int64)
    peri_band = (rho_b > spec.crater_radius) & (
        rho_b <= spec.crater_radius + spec.periwound_width
    )
    labels[peri_band] = lab.PERIWOUND
    inside = rho_b <= spec.crater_radius
    bounds = _sector_boundaries(spec)
    names = [name for name, _ in spec.tissue_fractions]
    if names:
        for name, x_lo, x_hi in zip(names, bounds[:-1], bounds[1:]):
            sel = inside & (phi_b >= x_lo) & (phi_b < x_hi)
            labels[sel] = taxonomy.id_of(name)
    else:
        labels[inside] = lab.WOUND_BED
    label_field = LabelField(labels, taxonomy)

    views = _orbit_views(spec, rng)

    from .evaluate import reproject_labels  # local import to avoid cycles

    masks = {v.view_id: reproject_labels(mesh, label_field, v) for v in views}

    detections = None
    if spec.marker:
        detections = [_marker_detections(spec, rng, views)]

    gt = _ground_truth(spec, smap)
    return SyntheticScene(spec, mesh, label_field, views, masks, detections, gt)


def _sector_boundaries(spec: SceneSpec) -> np.ndarray:
    fracs = np.asarray([f for _, f in spec.tissue_fractions], dtype=np.float64)
    return np.concatenate([[0.0], np.cumsum(fracs)]) * 2.0 * np.pi


def _orbit_views(spec: SceneSpec, rng) -> list:
    w, h = spec.image_size
    reach = spec.extent * max(1.0, spec.ellipticity)
    if spec.marker:
        reach = max(reach, _marker_rho(spec) + spec.marker_side)
    focal = 0.45 * min(w, h) * spec.orbit_radius / reach
    phase = rng.uniform(0.0, 2.0 * np.pi)
    elevations = np.deg2rad(
        spec.orbit_elevation_deg + rng.uniform(-2.0, 2.0, size=spec.n_views)
    )
    views = []
    for k in range(spec.n_views):
        az = phase + 2.0 * np.pi * k / spec.n_views
        el = elevations[k]
        pos_mm = spec.orbit_radius * np.array(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
        )
        z_cam = -pos_mm / np.linalg.norm(pos_mm)  # look at the origin
        x_cam = np.cross(z_cam, np.array([0.0, 0.0, 1.0]))
        x_cam /= np.linalg.norm(x_cam)
        y_cam = np.cross(z_cam, x_cam)
        rot = np.column_stack([x_cam, y_cam, z_cam])
        views.append(
            CameraView(
                view_id=f"view{k:02d}",
                image_name=f"view{k:02d}.png",
                width=w,
                height=h,
                fx=focal,
                fy=focal,
                cx=w / 2.0,
                cy=h / 2.0,
                rotation=rot,
                center=pos_mm / spec.model_scale,
            )
        )
    return views


def _marker_rho(spec: SceneSpec) -> float:
    return spec.crater_radius + spec.periwound_width + 0.9 * spec.marker_side


def _marker_detections(spec: SceneSpec, rng, views) -> MarkerDetections:
    smap = surface_map(spec)
    theta_m = rng.uniform(0.0, 2.0 * np.pi)
    rho_m = _marker_rho(spec)
    center = smap(rho_m, theta_m).reshape(3)
    if spec.base == "plane":
        t1 = np.array([1.0, 0.0, 0.0])
        t2 = np.array([0.0, 1.0, 0.0])
    else:
        ang = rho_m * np.sin(theta_m) / spec.cylinder_radius
        t1 = np.array([1.0, 0.0, 0.0])
        t2 = np.array([0.0, np.cos(ang), -np.sin(ang)])
    half = spec.marker_side / 2.0
    corners_mm = np.array(
        [
            center - half * t1 + half * t2,  # top-left
            center + half * t1 + half * t2,  # top-right
            center + half * t1 - half * t2,  # bottom-right
            center - half * t1 - half * t2,  # bottom-left
        ]
    )
    corners_model = corners_mm / spec.model_scale
    per_view = {}
    for view in views:
        px = [project(view, c) for c in corners_model]
        if all(p is not None for p in px):
            per_view[view.view_id] = np.asarray(px)
    if len(per_view) < 2:
        raise ValueError("marker visible in fewer than 2 views; spec infeasible")
    return MarkerDetections("m0", spec.marker_side, per_view)


def _ground_truth(spec: SceneSpec, smap) -> GroundTruth:
    r_c, d, a = spec.crater_radius, spec.crater_depth, spec.ellipticity
    circular_cap = spec.profile == "spherical_cap" and a == 1.0

    if spec.base == "plane":
        # rim lies at z = 0, so the fitted cover is the flat plane and the
        # cover geodesics reduce to planar distances
        perimeter = oracle.ellipse_perimeter(a * r_c, r_c)
        length = 2.0 * max(a, 1.0) * r_c
        width = 2.0 * min(a, 1.0) * r_c
        depth = d
        if circular_cap:
            area = oracle.spherical_cap_area(r_c, d)
        else:
            area = oracle.patch_area(smap, r_c)
    else:
        perimeter = oracle.rim_perimeter(smap, r_c)
        rim_theta = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
        rim_xyz = smap(np.full_like(rim_theta, r_c), rim_theta)
        tps = oracle.rim_thin_plate(rim_xyz)
        length, width = oracle.lifted_diameters(rim_xyz, tps=tps)
        depth = oracle.max_depression(smap, r_c, rim_xyz, tps=tps)
        area = oracle.patch_area(smap, r_c, n_r=900, n_t=900)

    if spec.base == "plane" and a == 1.0:
        fractions = {name: f for name, f in spec.tissue_fractions}
    else:
        bounds = _sector_boundaries(spec)
        fracs = oracle.sector_area_fractions(smap, r_c, bounds)
        fractions = {name: f for (name, _), f in zip(spec.tissue_fractions, fracs)}

    return GroundTruth(
        perimeter_mm=perimeter,
        length_mm=length,
        width_mm=width,
        wound_bed_area_mm2=area,
        max_depth_mm=depth,
        tissue_fractions=fractions,
        scale_mm_per_unit=spec.model_scale,
    )


# -- controlled degradation -------------------------------------------------------


def perturb(scene: SyntheticScene, kind: str, magnitude: float, seed: int = 0) -> SyntheticScene:
    """Seeded, reproducible degradation of a scene for robustness tests.

    ``gaussian_blur_masks`` blurs per-class mask channels and re-argmaxes;
    ``mask_dropout`` blanks ``magnitude`` whole views to background;
    ``vertex_noise`` adds isotropic Gaussian noise of ``magnitude`` mm to the
    mesh vertices. Magnitude 0 returns an unchanged copy. Analytic ground
    truth is carried over unchanged; it describes the clean scene.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    out = copy.deepcopy(scene)
    if magnitude == 0:
        return out
    rng = np.random.default_rng(seed)
    if kind == "gaussian_blur_masks":
        from scipy.ndimage import gaussian_filter

        n_classes = len(scene.labels.taxonomy)
        for vid, mask in out.masks.items():
            onehot = np.stack(
                [gaussian_filter((mask == c).astype(np.float64), magnitude)
                 for c in range(n_classes)]
            )
            out.masks[vid] = np.argmax(onehot, axis=0).astype(np.uint8)
    elif kind == "mask_dropout":
        ids = sorted(out.masks)
        order = rng.permutation(len(ids))
        for i in order[: int(magnitude)]:
            out.masks[ids[i]] = np.zeros_like(out.masks[ids[i]])
    elif kind == "vertex_noise":
        sigma = magnitude / scene.spec.model_scale
        noisy = out.mesh.vertices + rng.normal(0.0, sigma, out.mesh.vertices.shape)
        out.mesh = TriangleMesh(noisy, out.mesh.faces, out.mesh.vertex_colors)
    else:
        raise ValueError(f"unknown perturbation kind {kind!r}")
    return out


# -- scene disk round trip ----------------------------------------------------------

GT_SCHEMA = "wound3d/scene-gt-v1"


def save_scene(scene: SyntheticScene, out_dir) -> dict:
    """Write the scene in the same formats the CLI consumes; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "mesh": out_dir / "mesh.ply",
        "poses": out_dir / "poses.json",
        "labels": out_dir / "labels.json",
        "masks": out_dir / "masks",
        "gt": out_dir / "gt.json",
    }
    save_mesh(paths["mesh"], scene.mesh)
    save_views(paths["poses"], scene.views)
    save_labels(paths["labels"], scene.labels)
    paths["masks"].mkdir(exist_ok=True)
    for vid, mask in scene.masks.items():
        save_mask(paths["masks"] / f"{vid}.png", mask)
    if scene.detections:
        paths["detections"] = out_dir / "detections.json"
        save_detections(paths["detections"], scene.detections)
    doc = {
        "schema": GT_SCHEMA,
        "spec": scene.spec.to_dict(),
        "ground_truth": scene.gt.to_dict(),
    }
    paths["gt"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return paths


def load_scene(scene_dir) -> SyntheticScene:
    scene_dir = Path(scene_dir)
    doc = json.loads((scene_dir / "gt.json").read_text())
    spec = SceneSpec.from_dict(doc["spec"])
    mesh = load_mesh(scene_dir / "mesh.ply")
    views = load_views(scene_dir / "poses.json")
    labels = load_labels(scene_dir / "labels.json")
    masks = {
        v.view_id: load_mask(scene_dir / "masks" / f"{v.view_id}.png") for v in views
    }
    detections = None
    det_path = scene_dir / "detections.json"
    if det_path.exists():
        detections = load_detections(det_path)
    gt = GroundTruth(**doc["ground_truth"])
    return SyntheticScene(spec, mesh, labels, views, masks, detections, gt)
