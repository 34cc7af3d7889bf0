"""Command-line entry points.

Every subcommand reads/writes the documented interchange formats (PLY/OBJ
meshes, JSON poses/labels/detections, PNG masks) and exits nonzero with a
machine-readable JSON error object on stderr when a stage fails.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from ._version import TOOL_VERSION
from .document import DocumentConfig, run_document
from .fusion import FusionConfig, fuse_pipeline
from .labels import LABELS_SCHEMA, LabelField, load_labels
from .mesh import load_mesh, save_mesh
from .raster import load_mask, save_mask


def _sha256(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _load_masks(masks_dir, views):
    masks_dir = Path(masks_dir)
    masks = {}
    hashes = {}
    for view in views:
        stem = Path(view.image_name).stem if view.image_name else view.view_id
        path = masks_dir / f"{stem}.png"
        if path.exists():
            masks[view.view_id] = load_mask(path)
            hashes[f"masks/{stem}"] = _sha256(path)
    return masks, hashes


def _fusion_config_from_args(args, base=None) -> FusionConfig:
    cfg = base or FusionConfig()
    if getattr(args, "morph_radius", None):
        cfg.morphology = {
            "wound_bed": ("close", args.morph_radius),
            "periwound": ("close", args.morph_radius),
        }
    return cfg


def _document_config(args) -> DocumentConfig:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        fusion_raw = raw.pop("fusion", {})
        morph = {k: tuple(v) for k, v in fusion_raw.pop("morphology", {}).items()}
        fusion = FusionConfig(**fusion_raw, morphology=morph)
        cfg = DocumentConfig(fusion=fusion, **raw)
    else:
        cfg = DocumentConfig()
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.eps_angle is not None:
        cfg.eps_angle = args.eps_angle
    if args.seed is not None:
        cfg.seed = args.seed
    if args.strict_eq3_cover:
        cfg.strict_cover = True
    cfg.fusion = _fusion_config_from_args(args, cfg.fusion)
    return cfg


def _labels_with_info(path):
    """Load a label file written by `fuse`, including fusion bookkeeping."""
    from .fusion import FusionInfo
    from .labels import LabelTaxonomy

    doc = json.loads(Path(path).read_text())
    field = LabelField(
        np.asarray(doc["face_labels"], dtype=np.int64),
        LabelTaxonomy(tuple(doc["taxonomy"])),
    )
    info = None
    hashes = {}
    if "fusion" in doc:
        f = doc["fusion"]
        info = FusionInfo(
            f.get("views_used", []),
            f.get("views_skipped", []),
            f.get("unobserved_fraction", float("nan")),
            f.get("n_samples", 0),
        )
        hashes = doc.get("input_hashes", {})
    return field, info, hashes


def cmd_document(args) -> int:
    from .camera import load_views
    from .scale import load_detections

    views = load_views(args.poses)
    hashes = {"mesh": _sha256(args.mesh), "poses": _sha256(args.poses)}
    mesh = load_mesh(args.mesh)
    config = _document_config(args)

    labels = fusion_info = None
    masks = None
    if args.labels:
        labels, fusion_info, stored_hashes = _labels_with_info(args.labels)
        hashes.update(stored_hashes)
    else:
        if not args.masks:
            raise ValueError("either --masks or --labels is required")
        masks, mask_hashes = _load_masks(args.masks, views)
        hashes.update(mask_hashes)

    detections = None
    if args.detections and not args.unscaled:
        detections = load_detections(args.detections)
        hashes["detections"] = _sha256(args.detections)

    document, _ = run_document(
        mesh,
        views,
        masks=masks,
        detections=detections,
        config=config,
        labels=labels,
        fusion_info=fusion_info,
        out_dir=args.out,
        input_hashes=hashes,
    )
    sys.stdout.write(document.summary_text())
    return 0


def cmd_fuse(args) -> int:
    from .camera import load_views

    views = load_views(args.poses)
    mesh = load_mesh(args.mesh)
    masks, mask_hashes = _load_masks(args.masks, views)
    config = _fusion_config_from_args(args)
    labels, info = fuse_pipeline(mesh, views, masks, config)
    doc = {
        "schema": LABELS_SCHEMA,
        "taxonomy": list(labels.taxonomy.classes),
        "face_labels": [int(x) for x in labels.face_labels],
        "fusion": {
            "views_used": info.views_used,
            "views_skipped": info.views_skipped,
            "unobserved_fraction": info.unobserved_fraction,
            "n_samples": info.n_samples,
        },
        "input_hashes": {
            "mesh": _sha256(args.mesh),
            "poses": _sha256(args.poses),
            **mask_hashes,
        },
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n")
    return 0


def cmd_scale(args) -> int:
    from .camera import load_views
    from .scale import load_detections, recover_scale

    views = load_views(args.poses)
    detections = load_detections(args.detections)
    factor, diagnostics = recover_scale(detections, views)
    out = {"mm_per_unit": factor, "diagnostics": diagnostics.to_dict()}
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_reproject(args) -> int:
    from .camera import load_views
    from .evaluate import reproject_labels

    views = load_views(args.poses)
    mesh = load_mesh(args.mesh)
    labels = load_labels(args.labels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    selected = [v for v in views if args.view is None or v.view_id == args.view]
    if not selected:
        raise ValueError(f"view {args.view!r} not present in pose file")
    for view in selected:
        save_mask(out_dir / f"{view.view_id}.png", reproject_labels(mesh, labels, view))
    return 0


def cmd_synth(args) -> int:
    from .synth import SceneSpec, generate_scene, save_scene

    if args.spec:
        spec = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    else:
        spec = SceneSpec()
    if args.seed is not None:
        from dataclasses import replace

        spec = replace(spec, seed=args.seed)
    scene = generate_scene(spec)
    save_scene(scene, args.out)
    sys.stdout.write(json.dumps(scene.gt.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluate import icp_align, sample_surface, surface_metrics
    from .render import error_colored_mesh

    recon = load_mesh(args.recon)
    reference = load_mesh(args.reference)
    n = args.samples
    src = sample_surface(recon, n, seed=args.seed or 0)
    tgt = sample_surface(reference, n, seed=(args.seed or 0) + 1)
    r, t, rms = icp_align(src.points, tgt.points)
    src.points[:] = src.points @ r.T + t
    src.normals[:] = src.normals @ r.T

    if args.crop:
        polygon = np.asarray(json.loads(Path(args.crop).read_text())["polygon"])
        src = _crop_samples(src, polygon)
        tgt = _crop_samples(tgt, polygon)
        if len(src) == 0 or len(tgt) == 0:
            raise ValueError("crop polygon removed all samples")

    metrics = surface_metrics(src, tgt)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "icp_rms": rms,
        "n_samples": n,
        **metrics.to_dict(),
    }
    (out_dir / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    np.savetxt(out_dir / "ad_forward.txt", metrics.ad_forward, fmt="%.9g")
    np.savetxt(out_dir / "ad_backward.txt", metrics.ad_backward, fmt="%.9g")

    # per-vertex error render of the aligned reconstruction
    aligned = recon.transformed(r, t)
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(tgt.points).query(aligned.vertices)
    save_mesh(out_dir / "error_mesh.ply", error_colored_mesh(aligned, dist, vmax=args.vmax))
    sys.stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _crop_samples(samples, polygon):
    from .evaluate import PointSamples

    keep = _points_in_polygon(samples.points[:, :2], polygon)
    return PointSamples(samples.points[keep], samples.normals[keep], samples.face_ids[keep])


def _points_in_polygon(pts, polygon) -> np.ndarray:
    """Even-odd rule point-in-polygon test, vectorized over points."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    px, py = polygon[:, 0], polygon[:, 1]
    for i in range(len(polygon)):
        x0, y0 = px[i - 1], py[i - 1]
        x1, y1 = px[i], py[i]
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < xi)
    return inside


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wound3d",
        description="3D wound documentation from reconstructed meshes, camera "
        "poses, and per-view segmentation masks.",
    )
    parser.add_argument("--version", action="version", version=f"wound3d {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("document", help="full pipeline: fuse, measure, report")
    p.add_argument("--mesh", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--masks", help="directory of per-view mask PNGs")
    p.add_argument("--labels", help="precomputed label JSON (skips fusion)")
    p.add_argument("--detections", help="marker detection JSON for metric scale")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--alpha", type=float, help="perimeter smoothing override")
    p.add_argument("--eps-angle", type=float, dest="eps_angle")
    p.add_argument("--morph-radius", type=int, dest="morph_radius")
    p.add_argument("--seed", type=int)
    p.add_argument("--unscaled", action="store_true", help="ignore detections")
    p.add_argument("--strict-eq3-cover", action="store_true", dest="strict_eq3_cover",
                   help="fit the cover without the affine term")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_document)

    p = sub.add_parser("fuse", help="fuse masks onto the mesh, write labels JSON")
    p.add_argument("--mesh", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--morph-radius", type=int, dest="morph_radius")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("scale", help="recover metric scale from marker detections")
    p.add_argument("--poses", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_scale)

    p = sub.add_parser("reproject", help="render fused labels back into views")
    p.add_argument("--mesh", required=True)
    p.add_argument("--poses", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--view", help="single view id (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reproject)

    p = sub.add_parser("synth", help="generate a synthetic wound scene")
    p.add_argument("--spec", help="scene spec JSON (default spec if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("evaluate", help="surface metrics between two meshes")
    p.add_argument("--recon", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--crop", help="JSON crop polygon file")
    p.add_argument("--samples", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vmax", type=float, default=5.0, help="error color range")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - boundary: report and exit nonzero
        error = {
            "error": {
                "stage": args.command,
                "type": type(exc).__name__,
                "message": str(exc),
            }
        }
        sys.stderr.write(json.dumps(error, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
