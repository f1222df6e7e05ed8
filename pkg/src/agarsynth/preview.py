"""Contact-sheet rendering of generated patches with their annotations."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import pngio
from .coco import decode_rle, load_json

SHEET_COLS = 2
SHEET_ROWS = 2

# one distinct overlay color per category id (RGB in [0,1])
PALETTE = {
    1: (0.95, 0.25, 0.25),
    2: (0.25, 0.75, 0.25),
    3: (0.25, 0.45, 0.95),
    4: (0.90, 0.75, 0.10),
    5: (0.80, 0.30, 0.85),
}
_TINT = 0.35


def draw_box(img: np.ndarray, x: int, y: int, w: int, h: int, color) -> None:
    """1-pixel rectangle outline, clipped at the image border."""
    hgt, wid = img.shape[:2]
    x2, y2 = min(x + w - 1, wid - 1), min(y + h - 1, hgt - 1)
    x, y = max(x, 0), max(y, 0)
    img[y, x : x2 + 1] = color
    img[y2, x : x2 + 1] = color
    img[y : y2 + 1, x] = color
    img[y : y2 + 1, x2] = color


def annotate_patch(img: np.ndarray, annotations: list[dict]) -> np.ndarray:
    out = img.copy()
    for ann in annotations:
        color = np.array(PALETTE.get(ann["category_id"], (1.0, 1.0, 1.0)))
        if ann.get("segmentation"):
            mask = decode_rle(ann["segmentation"])
            out[mask] = (1 - _TINT) * out[mask] + _TINT * color
    for ann in annotations:
        color = PALETTE.get(ann["category_id"], (1.0, 1.0, 1.0))
        x, y, w, h = ann["bbox"]
        draw_box(out, x, y, w, h, color)
    return out


def render_previews(dataset_dir, out_dir, n: int) -> list[Path]:
    """Render the first ``n`` patches into 2x2 contact sheets."""
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    if n <= 0:
        return []
    data = load_json(dataset_dir / "annotations.json")
    images = sorted(data["images"], key=lambda im: im["id"])[:n]
    by_image: dict[int, list[dict]] = {im["id"]: [] for im in images}
    for ann in data["annotations"]:
        if ann["image_id"] in by_image:
            by_image[ann["image_id"]].append(ann)

    sheets: list[Path] = []
    per_sheet = SHEET_COLS * SHEET_ROWS
    for s in range(0, len(images), per_sheet):
        group = images[s : s + per_sheet]
        size = group[0]["height"]
        sheet = np.zeros((SHEET_ROWS * size, SHEET_COLS * size, 3))
        for k, im in enumerate(group):
            patch = pngio.load_rgb(dataset_dir / im["file_name"])
            r, c = divmod(k, SHEET_COLS)
            sheet[r * size : (r + 1) * size, c * size : (c + 1) * size] = annotate_patch(
                patch, by_image[im["id"]]
            )
        path = out_dir / f"preview_{s // per_sheet:03}.png"
        pngio.save_rgb(path, sheet)
        sheets.append(path)
    return sheets
