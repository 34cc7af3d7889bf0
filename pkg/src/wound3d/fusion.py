"""Multi-view fusion of 2D segmentation masks onto mesh faces.

Each view contributes a one-hot class vote per visible face, weighted by how
head-on the view sees the face: w = |<face normal, view ray>|. Votes with
w below cos(pi/3) are discarded as too oblique, except for the periwound
class, which is typically under-sampled and keeps all votes. The fused label
maximizes the sum of log-odds-weighted votes, sum_i 1[w_i >= 1/2] *
log(w_i / (1 - w_i)) * p_i, with ties broken toward the lower class id.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import labels as lab
from .camera import CameraView
from .labels import LabelField, LabelTaxonomy
from .mesh import TriangleMesh
from .raster import FaceIdBuffer, rasterize

OBLIQUENESS_CUTOFF = 0.5  # cos(pi/3)


@dataclass(frozen=True)
class ViewSample:
    """One view's weighted vote for one face."""

    face_id: int
    view_id: str
    weight: float
    class_id: int  # index of the single nonzero entry of the one-hot vote

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0 + 1e-12:
            raise ValueError(f"weight {self.weight} outside [0, 1]")


@dataclass
class FusionConfig:
    obliqueness_cutoff: float = OBLIQUENESS_CUTOFF
    weight_floor: float = 0.5
    weight_clamp: float = 1e-6
    min_pixels: int = 1
    backface_culling: bool = True
    periwound_bypass_cutoff: bool = True
    periwound_keep_floor: bool = True
    # class name -> (op, radius) applied after fusion, e.g. {"wound_bed": ("close", 2)}
    morphology: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.obliqueness_cutoff < 1.0:
            raise ValueError("obliqueness_cutoff must be in [0, 1)")
        if not 0.0 < self.weight_floor < 1.0:
            raise ValueError("weight_floor must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "obliqueness_cutoff": self.obliqueness_cutoff,
            "weight_floor": self.weight_floor,
            "weight_clamp": self.weight_clamp,
            "min_pixels": self.min_pixels,
            "backface_culling": self.backface_culling,
            "periwound_bypass_cutoff": self.periwound_bypass_cutoff,
            "periwound_keep_floor": self.periwound_keep_floor,
            "morphology": {k: list(v) for k, v in self.morphology.items()},
        }


def weighting_factor(normal, ray) -> float:
    """Absolute cosine between a unit face normal and a unit view ray."""
    normal = np.asarray(normal, dtype=np.float64)
    ray = np.asarray(ray, dtype=np.float64)
    for name, vec in (("normal", normal), ("ray", ray)):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a unit vector")
    return float(abs(np.dot(normal, ray)))


def _fused_scores(face_ids, weights, votes, n_faces, n_classes, floor, clamp):
    """Accumulate per-face class scores: 1[w >= floor] * log(w/(1-w)) * vote.

    Also returns the per-face/per-class counted-vote mask: the argmax is
    restricted to classes that actually received a vote, so a lone vote with
    exactly w = floor (score 0) still labels its face, and in bypass mode
    (floor 0) purely oblique evidence picks the least-oblique voted class
    instead of silently falling back to background.
    """
    face_ids = np.asarray(face_ids, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    votes = np.asarray(votes, dtype=np.int64)
    admissible = weights >= floor
    w = np.clip(weights[admissible], clamp, 1.0 - clamp)
    terms = np.log(w / (1.0 - w))
    scores = np.zeros((n_faces, n_classes))
    np.add.at(scores, (face_ids[admissible], votes[admissible]), terms)
    voted = np.zeros((n_faces, n_classes), dtype=bool)
    voted[face_ids[admissible], votes[admissible]] = True
    return scores, voted


def _argmax_voted(scores, voted):
    """Per-face argmax over voted classes (ties to the lower id); background
    where nothing was voted."""
    masked = np.where(voted, scores, -np.inf)
    labels = np.argmax(masked, axis=1)
    labels[~voted.any(axis=1)] = lab.BACKGROUND
    return labels


def fuse_labels(
    samples,
    n_faces: int,
    config: FusionConfig | None = None,
    taxonomy: LabelTaxonomy | None = None,
) -> LabelField:
    """Weighted majority vote over per-face view samples.

    ``samples`` is a flat iterable of :class:`ViewSample`; their weights are
    assumed to have passed the obliqueness cutoff already. Faces with no
    sample clearing the weight floor get background. Ties break toward the
    lower class id, so the result is order-independent.
    """
    config = config or FusionConfig()
    taxonomy = taxonomy or LabelTaxonomy()
    samples = list(samples)
    if samples:
        scores, voted = _fused_scores(
            [s.face_id for s in samples],
            [s.weight for s in samples],
            [s.class_id for s in samples],
            n_faces,
            len(taxonomy),
            config.weight_floor,
            config.weight_clamp,
        )
        fused = _argmax_voted(scores, voted)
    else:
        fused = np.zeros(n_faces, dtype=np.int64)
    return LabelField(fused, taxonomy)


@dataclass
class FusionInfo:
    """Bookkeeping from a fusion run, echoed into reports."""

    views_used: list
    views_skipped: list
    unobserved_fraction: float
    n_samples: int


def collect_view_samples(
    mesh: TriangleMesh,
    view: CameraView,
    mask: np.ndarray,
    config: FusionConfig,
    buffer: FaceIdBuffer | None = None,
):
    """Per-face (weight, majority class) pairs for one view.

    Returns (face_ids, weights, classes) arrays covering every face with at
    least ``min_pixels`` rasterized pixels; no cutoff is applied here.
    """
    from .raster import face_visibility_label

    if buffer is None:
        buffer = rasterize(mesh, view, backface_culling=config.backface_culling)
    votes = face_visibility_label(buffer, mask, config.min_pixels, n_classes=7)
    if not votes:
        return (np.empty(0, dtype=np.int64),) * 3
    face_ids = np.fromiter(votes.keys(), dtype=np.int64, count=len(votes))
    classes = np.fromiter(votes.values(), dtype=np.int64, count=len(votes))
    dirs = mesh.face_barycenters[face_ids] - view.center
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    weights = np.abs(np.einsum("ij,ij->i", mesh.face_normals[face_ids], dirs))
    return face_ids, weights, classes


def fuse_pipeline(
    mesh: TriangleMesh,
    views,
    masks: dict,
    config: FusionConfig | None = None,
    taxonomy: LabelTaxonomy | None = None,
) -> tuple[LabelField, FusionInfo]:
    """Full 2D-to-3D mapping: rasterize, sample, weight, and vote.

    Three vote tasks mirror the segmentation setup: wound bed vs rest,
    periwound vs rest (obliqueness cutoff bypassed), and tissue classes
    within the fused wound bed. Views without a mask are skipped with a
    warning. Faces never admissibly observed stay background and are counted
    in the returned info.
    """
    config = config or FusionConfig()
    taxonomy = taxonomy or LabelTaxonomy()
    n_faces = mesh.n_faces
    n_classes = len(taxonomy)

    all_faces, all_weights, all_classes = [], [], []
    used, skipped = [], []
    for view in views:
        mask = masks.get(view.view_id)
        if mask is None:
            warnings.warn(f"no mask for view {view.view_id}; view skipped")
            skipped.append(view.view_id)
            continue
        face_ids, weights, classes = collect_view_samples(mesh, view, mask, config)
        all_faces.append(face_ids)
        all_weights.append(weights)
        all_classes.append(classes)
        used.append(view.view_id)

    if not all_faces:
        empty = LabelField(np.zeros(n_faces, dtype=np.int64), taxonomy)
        return empty, FusionInfo(used, skipped, 1.0, 0)

    face_ids = np.concatenate(all_faces)
    weights = np.concatenate(all_weights)
    classes = np.concatenate(all_classes)

    cutoff = config.obliqueness_cutoff
    pass_cutoff = weights >= cutoff

    # wound bed vs rest (tissue pixels imply wound bed)
    wound_vote = np.isin(classes, lab.WOUND_BED_IDS).astype(np.int64)
    w_scores, w_voted = _fused_scores(
        face_ids[pass_cutoff], weights[pass_cutoff], wound_vote[pass_cutoff],
        n_faces, 2, config.weight_floor, config.weight_clamp,
    )
    wound = _argmax_voted(w_scores, w_voted) == 1

    # periwound vs rest; cutoff bypassed, weight floor per config
    peri_sel = slice(None) if config.periwound_bypass_cutoff else pass_cutoff
    peri_floor = config.weight_floor if config.periwound_keep_floor else 0.0
    peri_vote = (classes == lab.PERIWOUND).astype(np.int64)
    p_scores, p_voted = _fused_scores(
        face_ids[peri_sel], weights[peri_sel], peri_vote[peri_sel],
        n_faces, 2, peri_floor, config.weight_clamp,
    )
    peri = _argmax_voted(p_scores, p_voted) == 1

    # tissue refinement inside the wound bed
    tissue_sel = pass_cutoff & np.isin(classes, lab.WOUND_BED_IDS)
    t_scores, t_voted = _fused_scores(
        face_ids[tissue_sel], weights[tissue_sel], classes[tissue_sel],
        n_faces, n_classes, config.weight_floor, config.weight_clamp,
    )
    t_counted = t_voted.any(axis=1)
    tissue = _argmax_voted(t_scores, t_voted)

    fused = np.zeros(n_faces, dtype=np.int64)
    fused[peri] = lab.PERIWOUND
    fused[wound & t_counted] = tissue[wound & t_counted]
    fused[wound & ~t_counted] = lab.WOUND_BED

    unobserved = 1.0 - float(np.count_nonzero(w_voted.any(axis=1))) / n_faces
    result = LabelField(fused, taxonomy)

    for class_name, (op, radius) in config.morphology.items():
        result = _apply_morphology(mesh, result, taxonomy.id_of(class_name), op, radius)

    return result, FusionInfo(used, skipped, unobserved, int(len(face_ids)))


def _apply_morphology(mesh, label_field, class_id, op, radius):
    from .mesh import label_morphology

    return label_morphology(mesh, label_field, class_id, op, radius)


def write_vote_table(path, samples) -> None:
    """Debug dump: one JSON line per sample (face, view, weight, class)."""
    with open(Path(path), "w") as fh:
        for s in samples:
            fh.write(json.dumps({
                "face_id": s.face_id,
                "view_id": s.view_id,
                "weight": s.weight,
                "class_id": s.class_id,
            }, sort_keys=True) + "\n")
