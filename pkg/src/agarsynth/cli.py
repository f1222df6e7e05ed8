"""Command-line pipeline: extract | generate | stylize | evaluate | preview.

Exit codes: 0 success, 1 fatal configuration or I/O problem, 2 validation
failure. Every run logs the resolved configuration and master seed so any
artifact can be reproduced from its manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import banks, pngio
from .clusters import build_adjacency, connected_components
from .coco import (
    CATEGORY_IDS,
    SPECIES,
    ValidationError,
    load_json,
    parse_bbox,
    write_json,
)
from .config import ConfigError, PipelineConfig, load_config
from .dataset import GenerateSettings, generate_dataset
from .metrics import (
    Detection,
    GroundTruth,
    count_from_detections,
    counting_metrics,
    counting_report,
    map_coco,
)
from .preview import render_previews
from .seeding import rng_for
from .segment import extract_cluster
from .style import stylize_dataset

log = logging.getLogger("agarsynth")


# ---------------------------------------------------------------- extract

_EXTRACT_STATE: dict = {}


def _init_extract(image_paths, params, seed):
    _EXTRACT_STATE.update(paths=image_paths, params=params, seed=seed, cache={})


def _extract_task(task):
    image_id, cluster_idx, boxes, species = task
    cache = _EXTRACT_STATE["cache"]
    if image_id not in cache:
        cache[image_id] = pngio.load_rgb(_EXTRACT_STATE["paths"][image_id])
    rng = rng_for(_EXTRACT_STATE["seed"], image_id, cluster_idx)
    try:
        cluster = extract_cluster(
            cache[image_id], boxes, _EXTRACT_STATE["params"], rng, species
        )
    except Exception as exc:  # bad cluster: warn and continue with the batch
        log.warning("cluster %s/%s failed: %s", image_id, cluster_idx, exc)
        return image_id, cluster_idx, species, None
    return image_id, cluster_idx, species, cluster


def cmd_extract(args, cfg: PipelineConfig) -> int:
    data = load_json(args.annotations)
    images_dir = Path(args.images)
    id_to_species = {}
    for cat in data.get("categories", []):
        if cat["name"] not in SPECIES:
            raise ConfigError(f"unknown category '{cat['name']}' in {args.annotations}")
        id_to_species[cat["id"]] = cat["name"]

    image_paths = {}
    for img in data["images"]:
        path = images_dir / img["file_name"]
        if not path.is_file():
            raise FileNotFoundError(f"annotated image missing: {path}")
        image_paths[img["id"]] = path

    anns_by_image = defaultdict(list)
    for ann in data["annotations"]:
        anns_by_image[ann["image_id"]].append(ann)

    tasks = []
    for image_id in sorted(anns_by_image):
        anns = anns_by_image[image_id]
        boxes = [parse_bbox(a["bbox"]) for a in anns]
        adj = build_adjacency(boxes, cfg.extract.overlap_threshold)
        for cluster_idx, members in enumerate(connected_components(adj)):
            votes = Counter(id_to_species[anns[m]["category_id"]] for m in members)
            top = max(votes.values())
            species = sorted(name for name, v in votes.items() if v == top)[0]
            tasks.append((image_id, cluster_idx, [boxes[m] for m in members], species))

    params = cfg.extract.segmentation_params()
    seed = cfg.generate.seed
    if args.workers <= 1:
        _init_extract(image_paths, params, seed)
        results = [_extract_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(
            max_workers=args.workers,
            initializer=_init_extract,
            initargs=(image_paths, params, seed),
        ) as pool:
            results = list(pool.map(_extract_task, tasks))

    results.sort(key=lambda r: (r[0], r[1]))
    out_dir = Path(args.out)
    entries = []
    kept = Counter()
    discarded = Counter()
    counters = Counter()
    for image_id, cluster_idx, species, cluster in results:
        if cluster is None:
            discarded[species] += 1
            continue
        entries.append(banks.save_cluster(out_dir, counters[species], cluster))
        counters[species] += 1
        kept[species] += 1
    banks.write_bank_index(
        out_dir,
        entries,
        {
            "seed": seed,
            "config": cfg.to_dict()["extract"],
            "kept": dict(kept),
            "discarded": dict(discarded),
            "source_annotations": str(args.annotations),
        },
    )
    log.info("bank written: %d clusters kept, %d discarded", sum(kept.values()), sum(discarded.values()))
    return 0


# --------------------------------------------------------------- generate

def cmd_generate(args, cfg: PipelineConfig) -> int:
    clusters = banks.load_cluster_bank(args.bank)
    dishes = banks.load_dish_bank(args.dishes, cfg.generate.dish_inset_frac)
    g = cfg.generate
    settings = GenerateSettings(
        n_patches=args.n if args.n is not None else g.n_patches,
        patch_size=g.patch_size,
        count_mean=g.count_mean,
        max_place_attempts=g.max_place_attempts,
        species_weights=g.species_weights,
        scale_range=(g.scale_min, g.scale_max) if g.scale_augment else None,
        seed=g.seed,
    )
    generate_dataset(
        settings, clusters, dishes, args.out, workers=args.workers, config_echo=cfg.to_dict()
    )
    return 0


# ---------------------------------------------------------------- stylize

def cmd_stylize(args, cfg: PipelineConfig) -> int:
    mode = args.mode or cfg.stylize.mode
    styles = None
    if mode != "raw":
        if not args.styles:
            raise ConfigError("stylize mode '%s' needs --styles DIR" % mode)
        styles = banks.load_style_bank(args.styles)
    stylize_dataset(
        args.dataset,
        args.out,
        styles,
        mode,
        seed=cfg.generate.seed,
        lambda_style=cfg.stylize.lambda_style,
        strength_semi=cfg.stylize.strength_semi,
        strength_full=cfg.stylize.strength_full,
        bridge_jobs=cfg.stylize.bridge_jobs,
    )
    return 0


# --------------------------------------------------------------- evaluate

def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    gt_data = load_json(args.ground_truth)
    with open(args.predictions) as f:
        preds = json.load(f)

    image_ids = {img["id"] for img in gt_data["images"]}
    category_ids = {cat["id"] for cat in gt_data["categories"]}
    problems = []
    for i, p in enumerate(preds):
        if p["image_id"] not in image_ids:
            problems.append(f"prediction {i}: unknown image_id {p['image_id']}")
        if p["category_id"] not in category_ids:
            problems.append(f"prediction {i}: unknown category_id {p['category_id']}")
    if problems:
        for line in problems:
            log.error("%s", line)
        raise ValidationError(f"{len(problems)} id mismatches between predictions and ground truth")

    gts = [
        GroundTruth(ann["image_id"], ann["category_id"], parse_bbox(ann["bbox"]))
        for ann in gt_data["annotations"]
    ]
    dets = [
        Detection(p["image_id"], p["category_id"], parse_bbox(p["bbox"]), float(p["score"]))
        for p in preds
    ]

    mean_ap, table = map_coco(dets, gts)
    dets_by_image = defaultdict(list)
    for d in dets:
        dets_by_image[d.image_id].append(d)
    gt_counts = Counter(gt.image_id for gt in gts)
    pairs = [
        (
            image_id,
            gt_counts.get(image_id, 0),
            count_from_detections(dets_by_image.get(image_id, []), cfg.evaluate.score_thresh),
        )
        for image_id in sorted(image_ids)
    ]
    mae, smape = counting_metrics([(t, p) for _, t, p in pairs])

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        out_dir / "metrics.json",
        {
            "map": mean_ap,
            "ap_table": {
                str(cls): {f"{t:.2f}": ap for t, ap in by_t.items()}
                for cls, by_t in table.items()
            },
            "mae": mae,
            "smape_percent": smape,
            "score_thresh": cfg.evaluate.score_thresh,
        },
    )
    (out_dir / "counting.csv").write_text(counting_report(pairs))
    log.info("mAP=%.4f MAE=%.3f sMAPE=%.2f%%", mean_ap, mae, smape)
    return 0


# ---------------------------------------------------------------- preview

def cmd_preview(args, cfg: PipelineConfig) -> int:
    sheets = render_previews(args.dataset, args.out, args.n)
    log.info("wrote %d contact sheet(s)", len(sheets))
    return 0


# ------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agarsynth")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("extract", help="segment colony clusters from annotated images")
    common(p)
    p.add_argument("--images", required=True, help="directory with the annotated images")
    p.add_argument("--annotations", required=True, help="COCO-style annotation JSON")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", help="compose synthetic patches from a cluster bank")
    common(p)
    p.add_argument("--bank", required=True, help="cluster bank directory")
    p.add_argument("--dishes", required=True, help="empty-dish image directory")
    p.add_argument("--n", type=int, default=None, help="number of patches (overrides config)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stylize", help="re-style a generated dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="generated dataset directory")
    p.add_argument("--styles", default=None, help="style image directory")
    p.add_argument("--mode", choices=["raw", "semi", "full", "external"], default=None)
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    common(p)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("preview", help="render annotated contact sheets")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(func=cmd_preview)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.generate.seed = args.seed
        log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
        log.info("master seed: %d", cfg.generate.seed)
        return args.func(args, cfg)
    except ValidationError as exc:
        log.error("validation failed: %s", exc)
        return 2
    except (ConfigError, FileNotFoundError, NotADirectoryError) as exc:
        log.error("%s", exc)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
