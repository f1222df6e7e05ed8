"""Tiny self-contained demo dataset: annotated dish photos, empty dishes,
and style carriers, all drawn procedurally with fixed seeds.

Used by the test suite as its fixture corpus and handy for trying the CLI:

    python -m agarsynth.demo DEMO_DIR
    agarsynth extract --images DEMO_DIR/real --annotations DEMO_DIR/real/annotations.json --out BANK
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from . import pngio
from .coco import CATEGORY_IDS, build_annotation_file, write_json
from .seeding import rng_for

AGAR = np.array([0.78, 0.66, 0.42])
COLONY_TONES = {
    "B.subtilis": np.array([0.93, 0.90, 0.78]),
    "C.albicans": np.array([0.96, 0.93, 0.86]),
    "E.coli": np.array([0.90, 0.84, 0.66]),
    "P.aeruginosa": np.array([0.88, 0.92, 0.78]),
    "S.aureus": np.array([0.97, 0.88, 0.70]),
}


def agar_background(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    cx = cy = (size - 1) / 2.0
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / (size / 2.0)
    vignette = 1.0 - 0.12 * r**2
    waves = 0.02 * np.sin(yy / 97.0) * np.cos(xx / 83.0)
    base = AGAR[None, None, :] * (vignette + waves)[..., None]
    noise = rng.normal(0.0, 0.008, (size, size, 3))
    return np.clip(base + noise, 0.0, 1.0)


def draw_colony(img: np.ndarray, cx: float, cy: float, radius: float, tone: np.ndarray,
                rng: np.random.Generator, edge: float = 2.5) -> tuple[int, int, int, int]:
    """Paint one soft-edged round colony; returns its (x, y, w, h) box."""
    size = img.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    prof = np.clip((radius - r) / edge + 1.0, 0.0, 1.0) ** 0.8
    color = np.clip(tone + rng.normal(0.0, 0.015, 3), 0.0, 1.0)
    # slight dome shading so colonies are not flat discs
    shade = 1.0 - 0.15 * np.clip(r / max(radius, 1e-6), 0.0, 1.0) ** 2
    img[:] = prof[..., None] * (color * shade[..., None]) + (1 - prof[..., None]) * img
    x0 = int(np.floor(cx - radius - edge))
    y0 = int(np.floor(cy - radius - edge))
    x1 = int(np.ceil(cx + radius + edge))
    y1 = int(np.ceil(cy + radius + edge))
    return x0, y0, x1 - x0, y1 - y0


def draw_dark_streak(img: np.ndarray, cx: float, cy: float, rng: np.random.Generator) -> None:
    """Marker-like dark smudge, the kind of artifact the extractor removes."""
    size = img.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    d = np.sqrt(((yy - cy) / 4.0) ** 2 + ((xx - cx) / 14.0) ** 2)
    prof = np.clip(1.6 - d, 0.0, 1.0)
    dark = np.array([0.06, 0.06, 0.10]) + rng.normal(0.0, 0.005, 3)
    img[:] = prof[..., None] * dark + (1 - prof[..., None]) * img


# (species, cx, cy, radius) per image; pairs/triples share a cluster
_LAYOUTS = [
    [
        ("B.subtilis", 120, 110, 16),
        ("B.subtilis", 145, 118, 13),  # overlaps the previous one
        ("B.subtilis", 320, 90, 19),
        ("B.subtilis", 512, 150, 11),
        ("C.albicans", 150, 320, 21),
        ("C.albicans", 400, 300, 14),
        ("C.albicans", 520, 420, 17),
        ("E.coli", 130, 510, 18),
        ("E.coli", 350, 520, 12),
    ],
    [
        ("P.aeruginosa", 130, 120, 22),
        ("P.aeruginosa", 165, 140, 15),  # cluster of three
        ("P.aeruginosa", 145, 165, 12),
        ("P.aeruginosa", 420, 120, 17),
        ("P.aeruginosa", 520, 260, 13),
        ("S.aureus", 150, 400, 12),
        ("S.aureus", 330, 430, 16),
        ("S.aureus", 500, 480, 11),
        ("S.aureus", 250, 540, 14),
    ],
]

_STYLE_TINTS = {
    "style_warm": (np.array([1.10, 0.95, 0.78]), 0.02),
    "style_cool": (np.array([0.85, 0.95, 1.12]), 0.00),
    "style_bright": (np.array([1.18, 1.15, 1.10]), 0.03),
    "style_dim": (np.array([0.66, 0.62, 0.58]), -0.02),
}


def make_annotated_images(out_dir: Path, size: int = 640) -> dict:
    images = []
    annotations = []
    ann_id = 1
    for idx, layout in enumerate(_LAYOUTS):
        rng = rng_for(20240601, "demo-image", idx)
        img = agar_background(size, rng)
        draw_dark_streak(img, 70.0 + 30 * idx, 600.0 - 380 * idx, rng)
        file_name = f"img_{idx:03}.png"
        image_id = idx + 1
        for species, cx, cy, radius in layout:
            x, y, w, h = draw_colony(img, cx, cy, radius, COLONY_TONES[species], rng)
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": image_id,
                    "category_id": CATEGORY_IDS[species],
                    "bbox": [x, y, w, h],
                    "area": w * h,
                    "iscrowd": 0,
                }
            )
            ann_id += 1
        pngio.save_rgb(out_dir / file_name, img)
        images.append({"id": image_id, "file_name": file_name, "width": size, "height": size})
    data = build_annotation_file(images, annotations)
    write_json(out_dir / "annotations.json", data)
    return data


def make_dishes(out_dir: Path, size: int = 900, count: int = 1) -> list[Path]:
    paths = []
    for i in range(count):
        rng = rng_for(20240601, "demo-dish", i)
        pngio.save_rgb(out_dir / f"dish_{i:02}.png", agar_background(size, rng))
        paths.append(out_dir / f"dish_{i:02}.png")
    return paths


def make_styles(out_dir: Path, size: int = 256) -> list[Path]:
    paths = []
    for i, (name, (tint, lift)) in enumerate(sorted(_STYLE_TINTS.items())):
        rng = rng_for(20240601, "demo-style", i)
        img = np.clip(agar_background(size, rng) * tint + lift, 0.0, 1.0)
        pngio.save_rgb(out_dir / f"{name}.png", img)
        paths.append(out_dir / f"{name}.png")
    return paths


def make_demo_tree(root) -> dict:
    """Write real/ (2 annotated images), dishes/ and styles/ under root."""
    root = Path(root)
    (root / "real").mkdir(parents=True, exist_ok=True)
    (root / "dishes").mkdir(parents=True, exist_ok=True)
    (root / "styles").mkdir(parents=True, exist_ok=True)
    data = make_annotated_images(root / "real")
    make_dishes(root / "dishes")
    make_styles(root / "styles")
    return data


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "demo_data"
    make_demo_tree(target)
    print(f"demo data written to {target}")
