"""Label taxonomy and per-face label fields for segmented meshes."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_CLASSES = (
    "background",
    "wound_bed",
    "periwound",
    "granulation",
    "slough",
    "necrotic",
    "epithelial",
)

BACKGROUND = 0
WOUND_BED = 1
PERIWOUND = 2
GRANULATION = 3
SLOUGH = 4
NECROTIC = 5
EPITHELIAL = 6

# Tissue classes refine the generic wound-bed label; a face carrying any of
# these ids is still part of the wound bed.
TISSUE_IDS = (GRANULATION, SLOUGH, NECROTIC, EPITHELIAL)
WOUND_BED_IDS = (WOUND_BED,) + TISSUE_IDS


@dataclass(frozen=True)
class LabelTaxonomy:
    """Ordered class list; ids are the positions, dense from 0."""

    classes: tuple[str, ...] = DEFAULT_CLASSES

    def __len__(self) -> int:
        return len(self.classes)

    def id_of(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"unknown class name {name!r}") from None

    def name_of(self, class_id: int) -> str:
        if not 0 <= class_id < len(self.classes):
            raise KeyError(f"class id {class_id} outside taxonomy")
        return self.classes[class_id]


class LabelField:
    """One class id per mesh face under a fixed taxonomy."""

    def __init__(self, face_labels, taxonomy: LabelTaxonomy | None = None):
        self.taxonomy = taxonomy if taxonomy is not None else LabelTaxonomy()
        labels = np.asarray(face_labels)
        if labels.ndim != 1:
            raise ValueError("face_labels must be a flat array, one id per face")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.taxonomy)):
            raise ValueError("face label outside taxonomy range")
        self.face_labels = labels.astype(np.int64)

    def __len__(self) -> int:
        return len(self.face_labels)

    def mask(self, class_ids) -> np.ndarray:
        """Boolean face mask for one class id or an iterable of ids."""
        if np.isscalar(class_ids):
            return self.face_labels == class_ids
        return np.isin(self.face_labels, np.asarray(list(class_ids)))

    def copy(self) -> "LabelField":
        return LabelField(self.face_labels.copy(), self.taxonomy)

    def validate_for(self, mesh) -> None:
        if len(self.face_labels) != mesh.n_faces:
            raise ValueError(
                f"label field has {len(self.face_labels)} entries for a mesh "
                f"with {mesh.n_faces} faces"
            )


LABELS_SCHEMA = "wound3d/labels-v1"


def save_labels(path, label_field: LabelField) -> None:
    doc = {
        "schema": LABELS_SCHEMA,
        "taxonomy": list(label_field.taxonomy.classes),
        "face_labels": [int(x) for x in label_field.face_labels],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_labels(path) -> LabelField:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read label file {path}: {exc}") from exc
    taxonomy = LabelTaxonomy(tuple(doc["taxonomy"]))
    return LabelField(np.asarray(doc["face_labels"], dtype=np.int64), taxonomy)
