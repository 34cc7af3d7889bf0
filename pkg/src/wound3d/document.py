"""End-to-end wound documentation: fuse, split into components, reorient, fit
the cover, measure, and scale.

All measurement happens in model units; the metric scale (when marker
detections are available) is applied exactly once when the report is
assembled, which rules out double-scaling. Reports serialize to JSON with
sorted keys and no timestamps, so identical inputs yield byte-identical
output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import labels as lab
from ._version import REPORT_SCHEMA_VERSION, TOOL_VERSION
from .cover import fit_cover
from .evaluate import reproject_labels
from .frame import compute_frame
from .fusion import FusionConfig, FusionInfo, fuse_pipeline
from .labels import LabelField
from .measure import (
    WoundMetrics,
    default_alpha,
    depth_field,
    length_width,
    perimeter,
    surface_areas,
    tissue_composition,
)
from .mesh import TriangleMesh, boundary_loops, connected_face_sets, save_mesh
from .raster import save_mask
from .render import depth_maps

# fixed render palette, one RGB per taxonomy class
CLASS_PALETTE = np.array(
    [
        [178, 178, 178],  # background
        [198, 61, 57],    # wound_bed
        [240, 200, 80],   # periwound
        [232, 108, 136],  # granulation
        [222, 222, 96],   # slough
        [60, 52, 48],     # necrotic
        [186, 130, 214],  # epithelial
    ],
    dtype=np.uint8,
)


@dataclass
class DocumentConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    alpha: float | None = None          # perimeter smoothing; None = per-wound heuristic
    eps_angle: float = 0.0872           # |cos| bound: within 5 degrees of orthogonal
    max_perimeter_sites: int = 400
    geodesic_steps: int = 200
    cover_smoothing: float | None = None
    strict_cover: bool = False
    min_component_faces: int = 4        # smaller islands are listed, not measured
    depth_map_resolution: int = 256
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "fusion": self.fusion.to_dict(),
            "alpha": self.alpha,
            "eps_angle": self.eps_angle,
            "max_perimeter_sites": self.max_perimeter_sites,
            "geodesic_steps": self.geodesic_steps,
            "cover_smoothing": self.cover_smoothing,
            "strict_cover": self.strict_cover,
            "min_component_faces": self.min_component_faces,
            "depth_map_resolution": self.depth_map_resolution,
            "seed": self.seed,
        }


@dataclass
class WoundDocument:
    """The complete wound report: metrics, provenance, and artifact manifest."""

    components: list                    # list of per-component metric dicts
    unobserved_fraction: float
    fusion: dict                        # config echo + view bookkeeping
    scale: dict                         # factor, source, diagnostics
    config: dict
    manifest: dict = field(default_factory=dict)
    input_hashes: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    schema_version: str = REPORT_SCHEMA_VERSION
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "components": self.components,
            "unobserved_fraction": self.unobserved_fraction,
            "fusion": self.fusion,
            "scale": self.scale,
            "config": self.config,
            "manifest": self.manifest,
            "input_hashes": self.input_hashes,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WoundDocument":
        doc = json.loads(text)
        major = str(doc.get("schema_version", "")).split(".")[0]
        if major != REPORT_SCHEMA_VERSION.split(".")[0]:
            raise ValueError(
                f"unsupported report schema version {doc.get('schema_version')!r}"
            )
        return cls(
            components=doc["components"],
            unobserved_fraction=doc["unobserved_fraction"],
            fusion=doc["fusion"],
            scale=doc["scale"],
            config=doc["config"],
            manifest=doc.get("manifest", {}),
            input_hashes=doc.get("input_hashes", {}),
            warnings=doc.get("warnings", []),
            schema_version=doc["schema_version"],
            tool_version=doc.get("tool_version", ""),
        )

    def summary_text(self) -> str:
        """Human summary: lengths in mm, areas in cm^2."""
        lines = [f"wound3d report (schema {self.schema_version})"]
        unit = "mm" if self.scale.get("source") != "unscaled" else "model units"
        lines.append(f"scale: {self.scale['mm_per_unit']:.6g} mm/unit "
                     f"({self.scale.get('source')})")
        for comp in self.components:
            idx = comp["component"]
            lines.append(f"-- wound component {idx} --")
            if "error" in comp:
                lines.append(f"  not measured: {comp['error']}")
                continue
            m = comp["metrics"]
            lines.append(f"  area:      {m['wound_bed_area_mm2'] / 100.0:.2f} cm^2")
            lines.append(f"  perimeter: {m['perimeter_mm']:.1f} {unit}")
            lines.append(f"  length:    {m['length_mm']:.1f} {unit}")
            lines.append(f"  width:     {m['width_mm']:.1f} {unit}")
            lines.append(f"  max depth: {m['depth_mm']['max_depression']:.1f} {unit}")
            parts = [
                f"{name} {100.0 * frac:.0f}%"
                for name, frac in m["tissue_fractions"].items()
                if frac > 0
            ]
            lines.append("  tissue:    " + (", ".join(parts) if parts else "n/a"))
            lines.append(f"  periwound: {m['periwound_area_mm2'] / 100.0:.2f} cm^2")
        lines.append(f"unobserved faces: {100.0 * self.unobserved_fraction:.1f}%")
        return "\n".join(lines) + "\n"


def label_colored_mesh(mesh: TriangleMesh, label_field: LabelField) -> TriangleMesh:
    """Mesh copy with vertices colored by the dominant label of incident faces."""
    n_classes = len(label_field.taxonomy)
    votes = np.zeros((mesh.n_vertices, n_classes))
    areas = mesh.face_areas
    for corner in range(3):
        np.add.at(votes, (mesh.faces[:, corner], label_field.face_labels), areas)
    vertex_labels = np.argmax(votes, axis=1)
    return TriangleMesh(mesh.vertices, mesh.faces, CLASS_PALETTE[vertex_labels])


def run_document(
    mesh: TriangleMesh,
    views,
    masks: dict | None = None,
    detections=None,
    config: DocumentConfig | None = None,
    labels: LabelField | None = None,
    fusion_info: FusionInfo | None = None,
    out_dir=None,
    input_hashes: dict | None = None,
) -> tuple[WoundDocument, LabelField]:
    """Run the full documentation pipeline.

    Either ``masks`` (fusion runs here) or a precomputed ``labels`` field must
    be given. Without ``detections`` the report stays in model units and is
    flagged unscaled. When ``out_dir`` is set, artifacts (labeled mesh, depth
    maps, reprojection masks) are written and listed in the manifest.
    """
    config = config or DocumentConfig()
    doc_warnings: list[str] = []

    if labels is None:
        if masks is None:
            raise ValueError("need either masks or a precomputed label field")
        labels, fusion_info = fuse_pipeline(mesh, views, masks, config.fusion)
    if fusion_info is None:
        fusion_info = FusionInfo([], [], float("nan"), 0)

    if detections is not None:
        from .scale import recover_scale

        scale_factor, diagnostics = recover_scale(detections, views)
        scale_block = {
            "mm_per_unit": scale_factor,
            "source": "marker",
            "diagnostics": diagnostics.to_dict(),
        }
    else:
        scale_factor = 1.0
        scale_block = {"mm_per_unit": 1.0, "source": "unscaled", "diagnostics": {}}

    wound_faces = np.flatnonzero(labels.mask(lab.WOUND_BED_IDS))
    components = connected_face_sets(mesh, wound_faces)
    _, periwound_area = surface_areas(mesh, labels, scale_factor)

    out_dir = Path(out_dir) if out_dir is not None else None
    manifest: dict[str, str] = {}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        labeled = label_colored_mesh(mesh, labels)
        save_mesh(out_dir / "labeled_mesh.ply", labeled)
        manifest["labeled_mesh"] = "labeled_mesh.ply"
        reproj_dir = out_dir / "reprojection"
        reproj_dir.mkdir(exist_ok=True)
        for view in views:
            save_mask(reproj_dir / f"{view.view_id}.png", reproject_labels(mesh, labels, view))
            manifest[f"reprojection/{view.view_id}"] = f"reprojection/{view.view_id}.png"

    component_reports = []
    for idx, comp in enumerate(components):
        entry = {"component": idx, "n_faces": int(len(comp)),
                 "area_mm2": float(mesh.face_areas[comp].sum()) * scale_factor**2}
        if len(comp) < config.min_component_faces:
            entry["error"] = "component too small to measure"
            component_reports.append(entry)
            continue
        try:
            entry["metrics"], extras = _measure_component(
                mesh, labels, comp, config, scale_factor, periwound_area
            )
        except ValueError as exc:
            entry["error"] = str(exc)
            component_reports.append(entry)
            continue
        if out_dir is not None:
            ref_mesh, vertex_ids, depths = extras
            unit = "mm" if detections is not None else "units"
            stem_mesh = f"depth_mesh_c{idx}.ply"
            stem_img = f"depth_map_c{idx}.png"
            depth_maps(
                ref_mesh.scaled(scale_factor) if scale_factor != 1.0 else ref_mesh,
                comp,
                vertex_ids,
                depths * scale_factor,
                mesh_path=out_dir / stem_mesh,
                image_path=out_dir / stem_img,
                resolution=config.depth_map_resolution,
                unit=unit,
            )
            manifest[f"depth_mesh_c{idx}"] = stem_mesh
            manifest[f"depth_map_c{idx}"] = stem_img
        component_reports.append(entry)

    if not component_reports:
        doc_warnings.append("no wound component found")

    fusion_block = {
        "config": config.fusion.to_dict(),
        "views_used": list(fusion_info.views_used),
        "views_skipped": list(fusion_info.views_skipped),
        "n_samples": fusion_info.n_samples,
    }

    document = WoundDocument(
        components=component_reports,
        unobserved_fraction=fusion_info.unobserved_fraction,
        fusion=fusion_block,
        scale=scale_block,
        config=config.to_dict(),
        manifest=manifest,
        input_hashes=input_hashes or {},
        warnings=doc_warnings,
    )
    if out_dir is not None:
        (out_dir / "report.json").write_text(document.to_json())
        (out_dir / "summary.txt").write_text(document.summary_text())
        document.manifest["report"] = "report.json"
        document.manifest["summary"] = "summary.txt"
    return document, labels


def _measure_component(mesh, labels, comp, config, scale_factor, periwound_area):
    frame = compute_frame(mesh, comp)
    ref_mesh = frame.apply_to_mesh(mesh)
    loop = boundary_loops(ref_mesh, comp)[0]
    loop_pts = ref_mesh.vertices[loop]
    if len(loop_pts) < 4:
        raise ValueError("wound rim has fewer than 4 vertices")

    alpha = config.alpha if config.alpha is not None else default_alpha(loop_pts)
    perim, _ = perimeter(loop_pts, alpha)
    cover = fit_cover(
        loop_pts,
        smoothing=config.cover_smoothing,
        max_sites=config.max_perimeter_sites,
        strict=config.strict_cover,
    )
    (length, l_ends), (width, w_ends) = length_width(
        loop_pts,
        cover,
        eps_angle=config.eps_angle,
        max_sites=config.max_perimeter_sites,
        steps=config.geodesic_steps,
    )
    vertex_ids, depths, stats = depth_field(ref_mesh, comp, cover)
    composition = tissue_composition(labels, mesh, faces=comp)

    s = scale_factor
    metrics = WoundMetrics(
        perimeter=perim * s,
        length=length * s,
        length_endpoints=(l_ends[0] * s, l_ends[1] * s),
        width=width * s,
        width_endpoints=(w_ends[0] * s, w_ends[1] * s),
        wound_bed_area=float(mesh.face_areas[comp].sum()) * s**2,
        periwound_area=periwound_area,
        depth=_scale_depth(stats, s),
        tissue_fractions=composition,
        scale_factor=s,
        scaled=s != 1.0,
    )
    return metrics.to_dict(), (ref_mesh, vertex_ids, depths)


def _scale_depth(stats, s):
    from .measure import DepthStats

    return DepthStats(
        min_depth=stats.min_depth * s,
        max_depth=stats.max_depth * s,
        mean_depth=stats.mean_depth * s,
        max_depression=stats.max_depression * s,
        max_protrusion=stats.max_protrusion * s,
    )
