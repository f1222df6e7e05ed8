"""Parallel dataset generation with worker-count-independent determinism.

Every patch is generated from its own RNG seeded by the published hash of
(master seed, "patch", index), so an n-worker run and a single-worker run
produce byte-identical annotations. Workers write image files themselves
and hand lightweight annotation records back for the deterministic merge.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .banks import load_cluster_bank, load_dish_bank
from .coco import CATEGORY_IDS, build_annotation_file, encode_rle, write_json
from .compose import EmptyDish, compose_patch
from .segment import ColonyCluster
from .seeding import rng_for

log = logging.getLogger(__name__)


@dataclass
class GenerateSettings:
    n_patches: int
    patch_size: int = 512
    count_mean: float = 10.0
    max_place_attempts: int = 30
    species_weights: dict[str, float] | None = None
    scale_range: tuple[float, float] | None = None
    seed: int = 0


_WORKER: dict = {}


def _init_worker(clusters, dishes, settings, out_dir):
    _WORKER["clusters"] = clusters
    _WORKER["dishes"] = dishes
    _WORKER["settings"] = settings
    _WORKER["out_dir"] = out_dir


def _generate_one(index: int) -> dict:
    clusters: dict[str, list[ColonyCluster]] = _WORKER["clusters"]
    dishes: list[EmptyDish] = _WORKER["dishes"]
    s: GenerateSettings = _WORKER["settings"]
    out_dir: Path = _WORKER["out_dir"]

    rng = rng_for(s.seed, "patch", index)
    patch = compose_patch(
        clusters,
        dishes,
        rng,
        patch_size=s.patch_size,
        count_mean=s.count_mean,
        max_place_attempts=s.max_place_attempts,
        species_weights=s.species_weights,
        scale_range=s.scale_range,
    )
    file_name = f"images/patch_{index:06}.png"
    pngio.save_rgb(out_dir / file_name, patch.image)

    annotations = []
    for colony in patch.colonies:
        full = np.zeros((s.patch_size, s.patch_size), dtype=bool)
        x, y = colony.offset
        mh, mw = colony.mask.shape
        full[y : y + mh, x : x + mw] = colony.mask > 0.5
        annotations.append(
            {
                "category_id": CATEGORY_IDS[colony.species],
                "bbox": [colony.bbox.x, colony.bbox.y, colony.bbox.w, colony.bbox.h],
                "segmentation": encode_rle(full),
                "area": int(full.sum()),
                "iscrowd": 0,
            }
        )
    return {
        "index": index,
        "file_name": file_name,
        "annotations": annotations,
        "dish_id": patch.dish_id,
        "species": patch.species,
        "requested": patch.requested,
        "placed": len(patch.colonies),
        "fragments": [list(rect) for rect in patch.fragments],
    }


def generate_dataset(
    settings: GenerateSettings,
    clusters: dict[str, list[ColonyCluster]],
    dishes: list[EmptyDish],
    out_dir,
    workers: int = 1,
    config_echo: dict | None = None,
) -> dict:
    """Generate ``settings.n_patches`` annotated patches into ``out_dir``.

    Returns the manifest (also written to manifest.json). On an I/O failure
    mid-run the manifest still lists every completed patch before the error
    is re-raised, so a rerun can resume from a consistent state.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    indices = list(range(settings.n_patches))
    records: list[dict] = []
    try:
        if workers <= 1:
            _init_worker(clusters, dishes, settings, out_dir)
            for i in indices:
                records.append(_generate_one(i))
        else:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(clusters, dishes, settings, out_dir),
            ) as pool:
                records = list(pool.map(_generate_one, indices, chunksize=4))
    except Exception:
        _write_manifest(out_dir, settings, records, config_echo, status="aborted")
        raise

    records.sort(key=lambda r: r["index"])
    images = []
    annotations = []
    ann_id = 1
    for rec in records:
        image_id = rec["index"] + 1
        images.append(
            {
                "id": image_id,
                "file_name": rec["file_name"],
                "width": settings.patch_size,
                "height": settings.patch_size,
            }
        )
        for ann in rec["annotations"]:
            annotations.append({"id": ann_id, "image_id": image_id, **ann})
            ann_id += 1
    write_json(out_dir / "annotations.json", build_annotation_file(images, annotations))
    manifest = _write_manifest(out_dir, settings, records, config_echo, status="complete")
    log.info(
        "generated %d patches (%d colonies) in %.1fs",
        len(records),
        ann_id - 1,
        time.time() - started,
    )
    return manifest


def _write_manifest(out_dir, settings, records, config_echo, status) -> dict:
    per_class = {name: 0 for name in CATEGORY_IDS}
    short = 0
    for rec in records:
        per_class[rec["species"]] += rec["placed"]
        if rec["placed"] < rec["requested"]:
            short += 1
    manifest = {
        "status": status,
        "seed": settings.seed,
        "patch_size": settings.patch_size,
        "n_patches": settings.n_patches,
        "count_mean": settings.count_mean,
        "config": config_echo or {},
        "completed": [rec["file_name"] for rec in sorted(records, key=lambda r: r["index"])],
        "per_class_colonies": per_class,
        "short_patches": short,
        "mean_colonies": (
            float(np.mean([rec["placed"] for rec in records])) if records else 0.0
        ),
        "provenance": [
            {
                "patch": rec["index"],
                "dish": rec["dish_id"],
                "species": rec["species"],
                "requested": rec["requested"],
                "placed": rec["placed"],
                "fragments": rec["fragments"],
            }
            for rec in sorted(records, key=lambda r: r["index"])
        ],
    }
    write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest


def load_banks(bank_dir, dish_dir, inset_frac: float):
    return load_cluster_bank(bank_dir), load_dish_bank(dish_dir, inset_frac)
