"""Metric scale recovery from fiducial-marker corner detections.

Marker corners are triangulated across every frame that detected them; the
mean adjacent-corner distance gives the marker's side length in model units,
and the ratio to its known physical side is the scale factor. Detection is an
input (a sidecar JSON file produced by any standard square-marker detector);
this module never touches pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import CameraView, dlt_triangulate
from .mesh import TriangleMesh

# corner order is canonical: top-left, top-right, bottom-right, bottom-left
_ADJACENT = ((0, 1), (1, 2), (2, 3), (3, 0))

MAX_SIDE_SPREAD = 0.10


@dataclass
class MarkerDetections:
    marker_id: str
    side_length_mm: float
    corners_px: dict = field(default_factory=dict)  # view_id -> (4, 2) pixel array

    def __post_init__(self):
        if self.side_length_mm <= 0:
            raise ValueError("marker side length must be positive")
        self.corners_px = {
            str(k): np.asarray(v, dtype=np.float64).reshape(4, 2)
            for k, v in self.corners_px.items()
        }


@dataclass
class ScaleDiagnostics:
    per_marker: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"per_marker": self.per_marker}


def recover_scale(detections, views) -> tuple[float, ScaleDiagnostics]:
    """Scale factor (mm per model unit) from marker detections.

    ``views`` may be a list of CameraView or a view_id -> CameraView mapping.
    Each corner needs at least two detecting views; a marker needs at least
    three triangulated corners. A side-length spread above 10% of the mean
    aborts with an error since it signals unreliable detections. Multiple
    markers are combined by a spread-weighted mean.
    """
    if isinstance(views, dict):
        view_map = views
    else:
        view_map = {v.view_id: v for v in views}
    if not detections:
        raise ValueError("no marker detections")

    diagnostics = ScaleDiagnostics()
    scales, spreads = [], []
    for marker in detections:
        corners, corner_rms = _triangulate_marker(marker, view_map)
        present = [i for i in range(4) if corners[i] is not None]
        if len(present) < 3:
            raise ValueError(
                f"marker {marker.marker_id}: only {len(present)} corner(s) "
                "triangulated; need at least 3"
            )
        sides = [
            float(np.linalg.norm(corners[a] - corners[b]))
            for a, b in _ADJACENT
            if corners[a] is not None and corners[b] is not None
        ]
        if len(sides) < 2:
            raise ValueError(
                f"marker {marker.marker_id}: fewer than 2 measurable sides"
            )
        mean_side = float(np.mean(sides))
        spread = float((max(sides) - min(sides)) / mean_side)
        if spread > MAX_SIDE_SPREAD:
            raise ValueError(
                f"marker {marker.marker_id}: side-length spread {spread:.1%} "
                f"exceeds {MAX_SIDE_SPREAD:.0%}; detections look unreliable"
            )
        scale = marker.side_length_mm / mean_side
        scales.append(scale)
        spreads.append(spread)
        diagnostics.per_marker[marker.marker_id] = {
            "model_side": mean_side,
            "side_spread": spread,
            "scale_mm_per_unit": scale,
            "corner_reprojection_rms_px": corner_rms,
            "n_corners": len(present),
        }

    weights = 1.0 / (np.asarray(spreads) + 1e-6)
    final = float(np.sum(np.asarray(scales) * weights) / weights.sum())
    return final, diagnostics


def _triangulate_marker(marker: MarkerDetections, view_map):
    corners = [None] * 4
    rms = [None] * 4
    for i in range(4):
        obs = [
            (view_map[vid], px[i])
            for vid, px in marker.corners_px.items()
            if vid in view_map
        ]
        if len(obs) < 2:
            continue
        try:
            point, residual = dlt_triangulate(obs)
        except ValueError:
            continue
        corners[i] = point
        rms[i] = residual
    if all(c is None for c in corners):
        raise ValueError(
            f"marker {marker.marker_id}: no corner observed in >= 2 views"
        )
    return corners, [r for r in rms if r is not None]


def apply_scale(mesh: TriangleMesh, scale: float) -> TriangleMesh:
    """Scaled copy of a mesh; lengths scale by ``scale``, areas by its square.

    Apply exactly once: scaling twice by s compounds to s^2.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    return mesh.scaled(scale)


# -- detection file I/O ---------------------------------------------------------

DETECTIONS_SCHEMA = "wound3d/detections-v1"


def load_detections(path) -> list[MarkerDetections]:
    """Read the JSON marker-detection file (see README for the schema)."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read detections file {path}: {exc}") from exc
    markers = []
    for entry in doc.get("markers", []):
        try:
            markers.append(
                MarkerDetections(
                    marker_id=str(entry["marker_id"]),
                    side_length_mm=float(entry["side_length_mm"]),
                    corners_px=entry["detections"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"detections file {path}: bad marker entry: {exc}") from exc
    if not markers:
        raise ValueError(f"detections file {path}: no markers")
    return markers


def save_detections(path, detections) -> None:
    doc = {
        "schema": DETECTIONS_SCHEMA,
        "markers": [
            {
                "marker_id": m.marker_id,
                "side_length_mm": m.side_length_mm,
                "detections": {
                    vid: [[float(x) for x in row] for row in px]
                    for vid, px in sorted(m.corners_px.items())
                },
            }
            for m in detections
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
