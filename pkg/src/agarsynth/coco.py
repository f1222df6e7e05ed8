"""COCO-style annotation files with uncompressed RLE instance masks.

The five species categories use fixed ids so class labels stay stable
across generated datasets:

    1 B.subtilis, 2 C.albicans, 3 E.coli, 4 P.aeruginosa, 5 S.aureus

RLE is the uncompressed COCO form: column-major (Fortran-order) run
lengths alternating background/foreground, starting with background.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .clusters import BBox

SPECIES = ["B.subtilis", "C.albicans", "E.coli", "P.aeruginosa", "S.aureus"]
CATEGORY_IDS = {name: i + 1 for i, name in enumerate(SPECIES)}
CATEGORY_NAMES = {i + 1: name for i, name in enumerate(SPECIES)}


class ValidationError(Exception):
    """Raised when an annotation file fails integrity checks."""


def encode_rle(mask: np.ndarray) -> dict:
    """Encode a binary mask as uncompressed column-major RLE."""
    m = np.asarray(mask) > 0.5
    h, w = m.shape
    flat = m.flatten(order="F")
    changes = np.nonzero(np.diff(flat))[0] + 1
    boundaries = np.concatenate([[0], changes, [flat.size]])
    counts: list[int] = []
    if flat.size and flat[0]:
        counts.append(0)  # runs alternate starting with background
    counts.extend(int(r) for r in np.diff(boundaries))
    return {"size": [int(h), int(w)], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in rle["counts"]:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != h * w:
        raise ValidationError(f"RLE covers {pos} pixels, mask has {h * w}")
    return flat.reshape((h, w), order="F")


def mask_tight_bbox(mask: np.ndarray) -> BBox:
    """Tight bounding box of a nonempty binary mask."""
    m = np.asarray(mask) > 0.5
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        raise ValueError("empty mask has no bounding box")
    return BBox(
        int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)
    )


def annotation_record(
    ann_id: int, image_id: int, category_id: int, mask: np.ndarray
) -> dict:
    box = mask_tight_bbox(mask)
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": category_id,
        "bbox": [box.x, box.y, box.w, box.h],
        "segmentation": encode_rle(mask),
        "area": int(np.count_nonzero(np.asarray(mask) > 0.5)),
        "iscrowd": 0,
    }


def build_annotation_file(images: list[dict], annotations: list[dict]) -> dict:
    return {
        "images": images,
        "categories": [{"id": cid, "name": name} for name, cid in CATEGORY_IDS.items()],
        "annotations": annotations,
    }


def write_json(path, obj) -> None:
    """Deterministic JSON serialization (stable key order, fixed layout)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def load_json(path) -> dict:
    with open(path) as f:
        return json.load(f)


def parse_bbox(raw) -> BBox:
    x, y, w, h = raw
    return BBox(int(round(x)), int(round(y)), int(round(w)), int(round(h)))


def validate_annotations(data: dict, require_masks: bool = True) -> None:
    """Check referential integrity and mask/bbox consistency.

    Raises ValidationError listing every problem found.
    """
    problems: list[str] = []
    image_ids = {img["id"] for img in data.get("images", [])}
    if len(image_ids) != len(data.get("images", [])):
        problems.append("duplicate image ids")
    category_ids = {cat["id"] for cat in data.get("categories", [])}
    seen_ann_ids = set()
    for ann in data.get("annotations", []):
        aid = ann.get("id")
        if aid in seen_ann_ids:
            problems.append(f"duplicate annotation id {aid}")
        seen_ann_ids.add(aid)
        if ann.get("image_id") not in image_ids:
            problems.append(f"annotation {aid}: unknown image_id {ann.get('image_id')}")
        if ann.get("category_id") not in category_ids:
            problems.append(f"annotation {aid}: unknown category_id {ann.get('category_id')}")
        if ann.get("area", 0) <= 0:
            problems.append(f"annotation {aid}: non-positive area")
        seg = ann.get("segmentation")
        if require_masks:
            if not seg:
                problems.append(f"annotation {aid}: missing segmentation")
                continue
            try:
                mask = decode_rle(seg)
                tight = mask_tight_bbox(mask)
            except (ValidationError, ValueError) as exc:
                problems.append(f"annotation {aid}: bad RLE ({exc})")
                continue
            if [tight.x, tight.y, tight.w, tight.h] != list(ann.get("bbox", [])):
                problems.append(
                    f"annotation {aid}: bbox {ann.get('bbox')} is not the tight box "
                    f"of its mask {[tight.x, tight.y, tight.w, tight.h]}"
                )
            if int(np.count_nonzero(mask)) != ann.get("area"):
                problems.append(f"annotation {aid}: area does not match mask")
    if problems:
        raise ValidationError("; ".join(problems))
