"""Cluster segmentation: from an annotated crop to a background-free fragment.

The stages, in order: crop the cluster with a margin and build the boxes
mask, sharpen, detect dark artifacts by L/b thresholding in Lab space,
dilate and inpaint them by random walk, denoise the walk speckle, segment
on the luminance channel, widen the segmentation margins, derive the
blending mask from Lab distance to the background mean, and multiply the
three masks into the final alpha channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .chanvese import chan_vese
from .clusters import BBox
from .coco import mask_tight_bbox
from .imaging import (
    RgbaFragment,
    dilate,
    hadamard,
    nl_means_denoise,
    rgb_to_lab,
    unsharp_mask,
)

log = logging.getLogger(__name__)

_NEIGHBORS8 = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
)


@dataclass
class SegmentationParams:
    """Knobs for the extraction pipeline; see config docs for defaults."""

    crop_margin: int = 8
    unsharp_radius: float = 1.5
    unsharp_amount: float = 0.7
    l_thresh: float = 30.0
    b_thresh: float = 15.0
    artifact_dilate: float = 2.0
    inpaint_max_steps: int = 400
    nl_h: float = 0.08
    nl_patch: int = 5
    nl_window: int = 11
    cv_mu: float = 0.1
    cv_max_iter: int = 300
    mask_margin: float = 2.0
    blend_scale: float = 25.0


@dataclass
class ClusterCrop:
    image: np.ndarray  # (H, W, 3)
    boxes: list[BBox]  # in crop coordinates
    m_bx: np.ndarray  # union of boxes
    origin: tuple[int, int]  # (x0, y0) in the source image


@dataclass
class MaskSet:
    m_d: np.ndarray
    m_s: np.ndarray
    m_b: np.ndarray
    alpha: np.ndarray


@dataclass
class ColonyCluster:
    fragment: RgbaFragment
    boxes: list[BBox]
    instance_masks: list[np.ndarray]
    species: str
    masks: MaskSet | None = field(default=None, repr=False)


def crop_cluster(image: np.ndarray, cluster_boxes: list[BBox], margin: int) -> ClusterCrop:
    """Cut the margin-expanded bounding rectangle of a cluster's boxes."""
    if not cluster_boxes:
        raise ValueError("cannot crop an empty cluster")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    h, w = image.shape[:2]
    x0 = max(0, min(b.x for b in cluster_boxes) - margin)
    y0 = max(0, min(b.y for b in cluster_boxes) - margin)
    x1 = min(w, max(b.x2 for b in cluster_boxes) + margin)
    y1 = min(h, max(b.y2 for b in cluster_boxes) + margin)
    crop = np.ascontiguousarray(image[y0:y1, x0:x1])
    boxes = [b.translated(-x0, -y0) for b in cluster_boxes]
    m_bx = np.zeros(crop.shape[:2])
    for b in boxes:
        m_bx[max(0, b.y) : b.y2, max(0, b.x) : b.x2] = 1.0
    return ClusterCrop(image=crop, boxes=boxes, m_bx=m_bx, origin=(x0, y0))


def detect_dark_artifacts(crop_lab: np.ndarray, l_thresh: float, b_thresh: float) -> np.ndarray:
    """Dark contamination/text mask: L below and b below their thresholds."""
    return ((crop_lab[..., 0] < l_thresh) & (crop_lab[..., 2] < b_thresh)).astype(float)


def randomwalk_inpaint(
    crop: np.ndarray, m_d: np.ndarray, rng: np.random.Generator, max_steps: int = 400
) -> np.ndarray:
    """Replace each masked pixel with the first valid pixel its random walk hits.

    Walks take uniform 8-neighbor steps, clipped at the image border. A walk
    that exhausts ``max_steps`` falls back to the geometrically nearest valid
    pixel. Only masked pixels change, and replacement colors always come from
    valid pixels of the crop.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    invalid = np.asarray(m_d) > 0.5
    if not invalid.any():
        return np.asarray(crop, dtype=float).copy()
    if invalid.all():
        raise ValueError("artifact mask covers the whole crop; no valid pixels")
    h, w = invalid.shape
    ys, xs = np.nonzero(invalid)
    pos = np.stack([ys, xs], axis=1)
    source = np.full((len(pos), 2), -1, dtype=int)
    active = np.ones(len(pos), dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        steps = _NEIGHBORS8[rng.integers(0, 8, size=idx.size)]
        moved = pos[idx] + steps
        moved[:, 0] = np.clip(moved[:, 0], 0, h - 1)
        moved[:, 1] = np.clip(moved[:, 1], 0, w - 1)
        pos[idx] = moved
        arrived = ~invalid[moved[:, 0], moved[:, 1]]
        done = idx[arrived]
        source[done] = pos[done]
        active[idx] = ~arrived
    if active.any():
        # nearest valid pixel by Euclidean distance
        _, (iy, ix) = ndimage.distance_transform_edt(invalid, return_indices=True)
        rest = np.nonzero(active)[0]
        source[rest, 0] = iy[ys[rest], xs[rest]]
        source[rest, 1] = ix[ys[rest], xs[rest]]
    out = np.asarray(crop, dtype=float).copy()
    out[ys, xs] = out[source[:, 0], source[:, 1]]
    return out


def blending_mask(crop_lab: np.ndarray, m_s: np.ndarray, scale_k: float) -> np.ndarray:
    """Opacity proportional to Lab distance from the mean background color.

    Pixels colored like the background (outside ``m_s``) get low alpha so
    pasted colonies blend into a new dish; distances at or beyond
    ``scale_k`` saturate at 1.
    """
    if scale_k <= 0:
        raise ValueError("scale_k must be > 0")
    outside = np.asarray(m_s) <= 0.5
    if not outside.any():
        raise ValueError("segmentation mask covers everything; no background to sample")
    bg = crop_lab[outside].mean(axis=0)
    dist = np.sqrt(np.sum((crop_lab - bg) ** 2, axis=-1))
    return np.clip(dist / scale_k, 0.0, 1.0)


def extract_cluster(
    image: np.ndarray,
    cluster_boxes: list[BBox],
    params: SegmentationParams,
    rng: np.random.Generator,
    species: str,
) -> ColonyCluster | None:
    """Run the full segmentation pipeline on one cluster.

    Returns None when the cluster produces no usable alpha support (the
    caller counts and skips such clusters).
    """
    crop = crop_cluster(image, cluster_boxes, params.crop_margin)
    sharp = unsharp_mask(crop.image, params.unsharp_radius, params.unsharp_amount)
    lab = rgb_to_lab(sharp)
    m_d = detect_dark_artifacts(lab, params.l_thresh, params.b_thresh)
    m_d = dilate(m_d, params.artifact_dilate)
    if m_d.all():
        log.warning("artifact mask swallowed a whole crop; skipping cluster")
        return None
    cleaned = randomwalk_inpaint(sharp, m_d, rng, params.inpaint_max_steps)
    denoised = nl_means_denoise(cleaned, params.nl_h, params.nl_patch, params.nl_window)
    lab_clean = rgb_to_lab(denoised)
    m_s = chan_vese(
        lab_clean[..., 0] / 100.0, mu=params.cv_mu, max_iter=params.cv_max_iter
    )
    m_s = dilate(m_s, params.mask_margin)
    if not (m_s <= 0.5).any():
        log.warning("segmentation mask has no background; skipping cluster")
        return None
    m_b = blending_mask(lab_clean, m_s, params.blend_scale)
    alpha = hadamard(hadamard(crop.m_bx, m_s), m_b)
    if not (alpha > 0).any():
        return None

    boxes: list[BBox] = []
    instance_masks: list[np.ndarray] = []
    for box in crop.boxes:
        inst = np.zeros_like(alpha)
        ys, xs = max(0, box.y), max(0, box.x)
        inst[ys : box.y2, xs : box.x2] = alpha[ys : box.y2, xs : box.x2] > 0.5
        if not inst.any():
            continue
        instance_masks.append(inst)
        boxes.append(mask_tight_bbox(inst))
    if not boxes:
        return None
    return ColonyCluster(
        fragment=RgbaFragment(color=denoised, alpha=alpha),
        boxes=boxes,
        instance_masks=instance_masks,
        species=species,
        masks=MaskSet(m_d=m_d, m_s=m_s, m_b=m_b, alpha=alpha),
    )
