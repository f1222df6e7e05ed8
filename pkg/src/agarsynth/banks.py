"""Persistence for the cluster, empty-dish and style banks.

Cluster bank layout:

    bank/
      bank.json                          # index + extraction summary
      <species>/cluster_00000.png        # RGBA fragment
      <species>/cluster_00000.json       # boxes + instance-mask RLE

Dish and style banks are plain directories of PNG images; files are
ordered by name so bank indices are stable.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import pngio
from .clusters import BBox
from .coco import decode_rle, encode_rle, load_json, write_json
from .compose import EmptyDish
from .segment import ColonyCluster

log = logging.getLogger(__name__)


def save_cluster(bank_dir, species_index: int, cluster: ColonyCluster) -> dict:
    """Write one cluster's fragment and sidecar; returns its index entry."""
    bank_dir = Path(bank_dir)
    rel_png = f"{cluster.species}/cluster_{species_index:05}.png"
    rel_json = f"{cluster.species}/cluster_{species_index:05}.json"
    pngio.save_rgba(bank_dir / rel_png, cluster.fragment)
    write_json(
        bank_dir / rel_json,
        {
            "species": cluster.species,
            "boxes": [[b.x, b.y, b.w, b.h] for b in cluster.boxes],
            "instance_masks": [encode_rle(m) for m in cluster.instance_masks],
        },
    )
    return {"image": rel_png, "meta": rel_json, "species": cluster.species}


def write_bank_index(bank_dir, entries: list[dict], summary: dict) -> None:
    write_json(Path(bank_dir) / "bank.json", {"clusters": entries, "summary": summary})


def load_cluster_bank(bank_dir) -> dict[str, list[ColonyCluster]]:
    bank_dir = Path(bank_dir)
    index = load_json(bank_dir / "bank.json")
    by_species: dict[str, list[ColonyCluster]] = {}
    for entry in index["clusters"]:
        meta = load_json(bank_dir / entry["meta"])
        fragment = pngio.load_rgba(bank_dir / entry["image"])
        cluster = ColonyCluster(
            fragment=fragment,
            boxes=[BBox(*b) for b in meta["boxes"]],
            instance_masks=[decode_rle(r).astype(float) for r in meta["instance_masks"]],
            species=meta["species"],
        )
        by_species.setdefault(cluster.species, []).append(cluster)
    return by_species


def load_dish_bank(dish_dir, inset_frac: float = 0.05) -> list[EmptyDish]:
    """Load empty-dish backgrounds; the usable region is the image inset by
    ``inset_frac`` of its smaller side (keeps crops off the dish rim)."""
    dish_dir = Path(dish_dir)
    paths = sorted(p for p in dish_dir.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FileNotFoundError(f"no dish images (*.png) in {dish_dir}")
    dishes = []
    for p in paths:
        image = pngio.load_rgb(p)
        h, w = image.shape[:2]
        inset = int(round(inset_frac * min(h, w)))
        dishes.append(
            EmptyDish(dish_id=p.stem, image=image, usable=(inset, inset, w - inset, h - inset))
        )
    return dishes


def load_style_bank(style_dir) -> list[tuple[str, np.ndarray]]:
    style_dir = Path(style_dir)
    paths = sorted(p for p in style_dir.iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise FileNotFoundError(f"no style images (*.png) in {style_dir}")
    return [(p.stem, pngio.load_rgb(p)) for p in paths]
