"""Compose annotated synthetic patches from extracted colony clusters.

A patch takes a random rotated crop of an empty dish, picks a species,
draws a target colony count from an exponential distribution (rounded),
and keeps pasting randomly transformed clusters at non-overlapping
positions until the target is met or the attempt budget runs out. Every
placed colony keeps its tight box and instance mask in patch coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .clusters import BBox
from .coco import mask_tight_bbox
from .imaging import RgbaFragment, apply_flips, rotate_channels
from .segment import ColonyCluster

log = logging.getLogger(__name__)


@dataclass
class EmptyDish:
    dish_id: str
    image: np.ndarray
    usable: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)


@dataclass
class PlacedColony:
    species: str
    bbox: BBox  # patch coordinates
    mask: np.ndarray  # fragment-canvas binary mask
    offset: tuple[int, int]  # (x, y) of the fragment in the patch


@dataclass
class SyntheticPatch:
    image: np.ndarray
    colonies: list[PlacedColony]
    dish_id: str
    species: str
    requested: int
    fragments: list[tuple[int, int, int, int]] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)


def sample_colony_count(rng: np.random.Generator, count_mean: float) -> int:
    """Exponential draw with the given mean, rounded to the nearest integer."""
    if count_mean <= 0:
        raise ValueError("count_mean must be > 0")
    return int(round(draw_colony_count_raw(rng, count_mean)))


def draw_colony_count_raw(rng: np.random.Generator, count_mean: float) -> float:
    """The pre-rounding exponential variate behind :func:`sample_colony_count`."""
    return float(rng.exponential(count_mean))


def sample_crop_geometry(
    dish: EmptyDish,
    rng: np.random.Generator,
    patch_size: int,
    max_tries: int = 200,
    angle: float | None = None,
) -> tuple[float, float, float]:
    """Sample (angle, center) until all four crop corners land inside the
    dish's usable region; ``angle`` can be pinned for testing."""
    x0, y0, x1, y1 = dish.usable
    half = (patch_size - 1) / 2.0
    corners = np.array([[-half, -half], [half, -half], [-half, half], [half, half]])
    for _ in range(max_tries):
        theta = rng.uniform(0.0, 360.0) if angle is None else angle
        rad = np.deg2rad(theta)
        c, s = np.cos(rad), np.sin(rad)
        cx = rng.uniform(x0, x1 - 1)
        cy = rng.uniform(y0, y1 - 1)
        # crop-frame corner offsets rotated back into dish coordinates
        sx = c * corners[:, 0] - s * corners[:, 1] + cx
        sy = s * corners[:, 0] + c * corners[:, 1] + cy
        if (sx >= x0).all() and (sx <= x1 - 1).all() and (sy >= y0).all() and (sy <= y1 - 1).all():
            return theta, cx, cy
    raise RuntimeError(
        f"no valid {patch_size}px crop found in dish '{dish.dish_id}' after "
        f"{max_tries} tries; usable region too small or misconfigured"
    )


def render_crop(dish: EmptyDish, theta: float, cx: float, cy: float, patch_size: int) -> np.ndarray:
    """Bilinear resample of the rotated crop described by its geometry."""
    rad = np.deg2rad(theta)
    c, s = np.cos(rad), np.sin(rad)
    half = (patch_size - 1) / 2.0
    uu, vv = np.meshgrid(np.arange(patch_size) - half, np.arange(patch_size) - half)
    src_x = c * uu - s * vv + cx
    src_y = s * uu + c * vv + cy
    coords = np.stack([src_y.ravel(), src_x.ravel()])
    out = np.empty((patch_size, patch_size, 3))
    for ch in range(3):
        out[..., ch] = ndimage.map_coordinates(
            dish.image[..., ch], coords, order=1, mode="nearest"
        ).reshape(patch_size, patch_size)
    return out


def crop_background(
    dish: EmptyDish,
    rng: np.random.Generator,
    patch_size: int,
    max_tries: int = 200,
    angle: float | None = None,
) -> np.ndarray:
    """Random rotated crop of an empty dish (see :func:`sample_crop_geometry`)."""
    theta, cx, cy = sample_crop_geometry(dish, rng, patch_size, max_tries, angle)
    return render_crop(dish, theta, cx, cy, patch_size)


def rects_intersect(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    """Positive-area intersection of (x, y, w, h) rectangles; touching is fine."""
    return a[0] < b[0] + b[2] and b[0] < a[0] + a[2] and a[1] < b[1] + b[3] and b[1] < a[1] + a[3]


def try_place(
    placed: list[tuple[int, int, int, int]],
    frag_w: int,
    frag_h: int,
    patch_size: int,
    rng: np.random.Generator,
    max_attempts: int,
) -> tuple[tuple[int, int] | None, int]:
    """Find a free in-bounds offset for a fragment rectangle.

    Returns (offset or None, attempts used). Rejection is a normal outcome
    on crowded patches.
    """
    if frag_w > patch_size or frag_h > patch_size:
        return None, 0
    for attempt in range(1, max_attempts + 1):
        x = int(rng.integers(0, patch_size - frag_w + 1))
        y = int(rng.integers(0, patch_size - frag_h + 1))
        rect = (x, y, frag_w, frag_h)
        if not any(rects_intersect(rect, other) for other in placed):
            return (x, y), attempt
    return None, max_attempts


def transform_cluster(
    cluster: ColonyCluster,
    rng: np.random.Generator,
    scale_range: tuple[float, float] | None = None,
) -> ColonyCluster | None:
    """Random rotation/flips (and optional scaling) of a cluster.

    The fragment and every instance mask go through the identical warp;
    boxes are recomputed as tight boxes of the warped masks. Members whose
    mask vanishes under resampling are dropped; returns None if none survive.
    """
    angle = float(rng.uniform(0.0, 360.0))
    flip_h = bool(rng.integers(0, 2))
    flip_v = bool(rng.integers(0, 2))
    stack = np.dstack(
        [cluster.fragment.color, cluster.fragment.alpha] + list(cluster.instance_masks)
    )
    if scale_range is not None:
        factor = float(rng.uniform(*scale_range))
        stack = ndimage.zoom(stack, (factor, factor, 1.0), order=1)
        np.clip(stack, 0.0, 1.0, out=stack)
    stack = apply_flips(rotate_channels(stack, angle), flip_h, flip_v)
    fragment = RgbaFragment(color=stack[..., :3], alpha=stack[..., 3])
    boxes: list[BBox] = []
    masks: list[np.ndarray] = []
    for i in range(len(cluster.instance_masks)):
        mask = (stack[..., 4 + i] > 0.5).astype(float)
        if not mask.any():
            continue
        masks.append(mask)
        boxes.append(mask_tight_bbox(mask))
    if not boxes:
        return None
    return ColonyCluster(
        fragment=fragment, boxes=boxes, instance_masks=masks, species=cluster.species
    )


def composite(canvas: np.ndarray, frag: RgbaFragment, x: int, y: int) -> None:
    """Alpha-blend a fragment onto the canvas in place."""
    h, w = frag.alpha.shape
    alpha = frag.alpha[..., None]
    region = canvas[y : y + h, x : x + w]
    canvas[y : y + h, x : x + w] = alpha * frag.color + (1.0 - alpha) * region


def pick_species(rng: np.random.Generator, weights: dict[str, float]) -> str:
    names = sorted(weights)
    w = np.array([weights[n] for n in names], dtype=float)
    if (w < 0).any() or w.sum() <= 0:
        raise ValueError("species weights must be nonnegative and not all zero")
    return names[int(rng.choice(len(names), p=w / w.sum()))]


def compose_patch(
    clusters_by_species: dict[str, list[ColonyCluster]],
    dishes: list[EmptyDish],
    rng: np.random.Generator,
    patch_size: int = 512,
    count_mean: float = 10.0,
    max_place_attempts: int = 30,
    species_weights: dict[str, float] | None = None,
    scale_range: tuple[float, float] | None = None,
) -> SyntheticPatch:
    """Compose one annotated patch."""
    if not dishes or not clusters_by_species:
        raise ValueError("cluster and dish banks must be non-empty")
    if species_weights is None:
        species_weights = {name: 1.0 for name in clusters_by_species}
    available = {
        name: w
        for name, w in species_weights.items()
        if w > 0 and clusters_by_species.get(name)
    }
    if not available:
        raise ValueError("no species with positive weight has clusters in the bank")

    dish = dishes[int(rng.integers(0, len(dishes)))]
    species = pick_species(rng, available)
    target = sample_colony_count(rng, count_mean)
    canvas = crop_background(dish, rng, patch_size)

    placed_rects: list[tuple[int, int, int, int]] = []
    colonies: list[PlacedColony] = []
    pool = clusters_by_species[species]
    budget = 50 * max_place_attempts
    while len(colonies) < target and budget > 0:
        cluster = pool[int(rng.integers(0, len(pool)))]
        moved = transform_cluster(cluster, rng, scale_range)
        if moved is None:
            budget -= 1
            continue
        offset, used = try_place(
            placed_rects,
            moved.fragment.width,
            moved.fragment.height,
            patch_size,
            rng,
            max_place_attempts,
        )
        if offset is None:
            budget -= max(used, 1)
            continue
        x, y = offset
        composite(canvas, moved.fragment, x, y)
        placed_rects.append((x, y, moved.fragment.width, moved.fragment.height))
        for box, mask in zip(moved.boxes, moved.instance_masks):
            colonies.append(
                PlacedColony(
                    species=species,
                    bbox=box.translated(x, y),
                    mask=mask,
                    offset=(x, y),
                )
            )
    np.clip(canvas, 0.0, 1.0, out=canvas)
    return SyntheticPatch(
        image=canvas,
        colonies=colonies,
        dish_id=dish.dish_id,
        species=species,
        requested=target,
        fragments=placed_rects,
    )
