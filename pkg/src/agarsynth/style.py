"""Style/content loss mathematics and pipeline stylization.

The loss combines Gram matrices of feature maps:

    loss(y, y_c, y_s) = (1 - w) * sum_l ||G_l(y) - G_l(y_c)||_F
                        + w * sum_l ||G_l(y) - G_l(y_s)||_F

with G = F F^T / (C H W) for the unrolled C x (H W) activation matrix F.
The default feature extractor is a frozen, seed-deterministic bank of 3x3
filters applied at three downsampling scales, so the loss is computable
without any pretrained network. The pipeline's built-in stylization is
statistical Lab moment matching; the faithful neural path runs through an
external bridge process consuming one JSON job file per 2x2 patch tile.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import pngio
from .coco import load_json, write_json
from .imaging import lab_to_rgb, rgb_to_lab
from .seeding import derive_seed

log = logging.getLogger(__name__)

MODES = ("raw", "semi", "full", "external")
TILE_PATCHES = 4  # 2x2 patches per external stylization job

_FILTER_SEED = 51966  # frozen; changing it would change every loss value
_N_FILTERS = 8
_filters_cache: np.ndarray | None = None


class BridgeUnavailable(RuntimeError):
    """External stylization requested but no bridge executable is configured."""


def _filters() -> np.ndarray:
    global _filters_cache
    if _filters_cache is None:
        rng = np.random.default_rng(_FILTER_SEED)
        _filters_cache = rng.normal(size=(_N_FILTERS, 3, 3, 3)) / np.sqrt(27.0)
    return _filters_cache


def conv3x3(img: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Correlate an (H, W, 3) image with (C, 3, 3, 3) filters, symmetric
    padding, output (C, H, W)."""
    h, w = img.shape[:2]
    padded = np.pad(img, [(1, 1), (1, 1), (0, 0)], mode="symmetric")
    out = np.zeros((filters.shape[0], h, w))
    for dy in range(3):
        for dx in range(3):
            region = padded[dy : dy + h, dx : dx + w]  # (H, W, 3)
            out += np.tensordot(filters[:, dy, dx, :], region, axes=([1], [2]))
    return out


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def default_extractor(img: np.ndarray) -> list[np.ndarray]:
    """Feature maps at up to three scales; deterministic across runs."""
    img = np.asarray(img, dtype=float)
    layers = []
    cur = img
    for _ in range(3):
        layers.append(conv3x3(cur, _filters()))
        if min(cur.shape[:2]) < 4:
            break
        cur = _downsample2(cur)
    return layers


def gram(fm: np.ndarray) -> np.ndarray:
    """Gram matrix of one (C, H, W) feature layer, normalized by C*H*W."""
    c, h, w = fm.shape
    flat = fm.reshape(c, h * w)
    return (flat @ flat.T) / (c * h * w)


def style_loss(
    y: np.ndarray,
    y_c: np.ndarray,
    y_s: np.ndarray,
    lambda_style: float,
    extractor=default_extractor,
) -> float:
    """Weighted Gram distance of ``y`` to content ``y_c`` and style ``y_s``.

    Computed as (1 - w) * content_term + w * style_term where each term
    sums Frobenius norms over layers, so the loss is exactly bilinear in
    the two terms and the endpoints drop the opposite image entirely.
    """
    if not 0.0 <= lambda_style <= 1.0:
        raise ValueError("lambda_style must be in [0, 1]")
    g_y = [gram(f) for f in extractor(y)]
    g_c = [gram(f) for f in extractor(y_c)]
    g_s = [gram(f) for f in extractor(y_s)]
    content_term = sum(float(np.linalg.norm(a - b)) for a, b in zip(g_y, g_c))
    style_term = sum(float(np.linalg.norm(a - b)) for a, b in zip(g_y, g_s))
    return (1.0 - lambda_style) * content_term + lambda_style * style_term


def transfer_lab_moments(lab_c: np.ndarray, lab_s: np.ndarray, strength: float) -> np.ndarray:
    """Interpolate content Lab statistics toward style statistics.

    Full transfer shifts/scales each channel to the style's mean and
    (population) standard deviation; the result is blended linearly with
    the content so both the mean and the std interpolate linearly in
    ``strength``. A flat content channel maps straight to the style mean.
    """
    mu_c = lab_c.mean(axis=(0, 1))
    sd_c = lab_c.std(axis=(0, 1))
    mu_s = lab_s.mean(axis=(0, 1))
    sd_s = lab_s.std(axis=(0, 1))
    scale = np.where(sd_c > 1e-6, sd_s / np.maximum(sd_c, 1e-6), 0.0)
    matched = (lab_c - mu_c) * scale + mu_s
    return lab_c + strength * (matched - lab_c)


def color_transfer_lab(content: np.ndarray, style: np.ndarray, strength: float) -> np.ndarray:
    """Reinhard-style statistical color transfer in Lab space."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError("strength must be in [0, 1]")
    if strength == 0.0:
        return np.asarray(content, dtype=float).copy()
    out_lab = transfer_lab_moments(rgb_to_lab(content), rgb_to_lab(style), strength)
    return lab_to_rgb(out_lab)


def _patch_files(dataset_dir: Path) -> list[tuple[int, str]]:
    ann = load_json(dataset_dir / "annotations.json")
    return [(img["id"], img["file_name"]) for img in sorted(ann["images"], key=lambda i: i["id"])]


def _pick_style(styles: list, seed: int, label: str, index: int) -> int:
    return derive_seed(seed, label, index) % len(styles)


def resolve_bridge() -> str:
    exe = os.environ.get("AGARSYNTH_BRIDGE", "")
    if not exe:
        raise BridgeUnavailable(
            "external stylization needs the AGARSYNTH_BRIDGE environment variable "
            "pointing at the bridge executable; use mode 'semi' or 'full' for the "
            "built-in statistical transfer instead"
        )
    resolved = shutil.which(exe) or (exe if os.path.isfile(exe) else None)
    if resolved is None:
        raise BridgeUnavailable(
            f"bridge executable '{exe}' not found; fix AGARSYNTH_BRIDGE or fall "
            "back to the built-in modes (semi/full)"
        )
    return resolved


def _run_bridge(exe: str, job_path: Path) -> None:
    proc = subprocess.run([exe, str(job_path)], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(
            f"bridge job {job_path.name} failed (exit {proc.returncode}): "
            f"{proc.stderr.strip() or proc.stdout.strip()}"
        )


def stylize_dataset(
    dataset_dir,
    out_dir,
    styles: list[tuple[str, np.ndarray]] | None,
    mode: str,
    seed: int = 0,
    lambda_style: float = 0.05,
    strength_semi: float = 0.4,
    strength_full: float = 0.8,
    bridge_jobs: int = 1,
) -> dict:
    """Produce a stylized copy of a generated dataset.

    raw passes image bytes through untouched; semi/full apply the built-in
    Lab moment transfer with a per-patch style drawn deterministically from
    the bank; external tiles patches 2x2 into double-size jobs for the
    neural bridge. Annotations are copied byte-identically in every mode.
    """
    if mode not in MODES:
        raise ValueError(f"unknown stylization mode '{mode}' (choose from {MODES})")
    dataset_dir = Path(dataset_dir)
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = _patch_files(dataset_dir)
    assignments: dict[str, str] = {}

    if mode == "raw":
        for _, name in entries:
            shutil.copyfile(dataset_dir / name, out_dir / name)
    elif mode in ("semi", "full"):
        if not styles:
            raise ValueError("built-in stylization needs a non-empty style bank")
        strength = strength_semi if mode == "semi" else strength_full
        for image_id, name in entries:
            sid, style_img = styles[_pick_style(styles, seed, "style", image_id)]
            img = pngio.load_rgb(dataset_dir / name)
            pngio.save_rgb(out_dir / name, color_transfer_lab(img, style_img, strength))
            assignments[name] = sid
    else:
        assignments = _stylize_external(
            dataset_dir, out_dir, entries, styles, seed, lambda_style, bridge_jobs
        )

    shutil.copyfile(dataset_dir / "annotations.json", out_dir / "annotations.json")
    manifest = {
        "mode": mode,
        "seed": seed,
        "lambda_style": lambda_style if mode == "external" else None,
        "styles": assignments,
        "source": str(dataset_dir),
    }
    write_json(out_dir / "stylize_manifest.json", manifest)
    return manifest


def make_tile(images: list[np.ndarray], patch_size: int) -> np.ndarray:
    """Arrange up to 4 patches row-major into a 2x2 tile (zeros pad short tiles)."""
    tile = np.zeros((2 * patch_size, 2 * patch_size, 3))
    for k, img in enumerate(images):
        r, c = divmod(k, 2)
        tile[
            r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size
        ] = img
    return tile


def split_tile(tile: np.ndarray, patch_size: int, count: int) -> list[np.ndarray]:
    out = []
    for k in range(count):
        r, c = divmod(k, 2)
        out.append(
            tile[r * patch_size : (r + 1) * patch_size, c * patch_size : (c + 1) * patch_size]
        )
    return out


def _stylize_external(
    dataset_dir: Path,
    out_dir: Path,
    entries: list[tuple[int, str]],
    styles,
    seed: int,
    lambda_style: float,
    bridge_jobs: int,
) -> dict[str, str]:
    if not styles:
        raise ValueError("external stylization needs a non-empty style bank")
    exe = resolve_bridge()
    jobs_dir = out_dir / "bridge_jobs"
    jobs_dir.mkdir(parents=True, exist_ok=True)

    first = pngio.load_rgb(dataset_dir / entries[0][1])
    patch_size = first.shape[0]

    style_paths: dict[str, Path] = {}
    jobs: list[tuple[Path, list[tuple[int, str]]]] = []
    assignments: dict[str, str] = {}
    for t in range(0, len(entries), TILE_PATCHES):
        group = entries[t : t + TILE_PATCHES]
        tile_idx = t // TILE_PATCHES
        sid, style_img = styles[_pick_style(styles, seed, "style-tile", tile_idx)]
        if sid not in style_paths:
            style_paths[sid] = jobs_dir / f"style_{sid}.png"
            pngio.save_rgb(style_paths[sid], style_img)
        tile = make_tile([pngio.load_rgb(dataset_dir / name) for _, name in group], patch_size)
        content_path = jobs_dir / f"tile_{tile_idx:05}.png"
        output_path = jobs_dir / f"tile_{tile_idx:05}_out.png"
        pngio.save_rgb(content_path, tile)
        job = {
            "content": str(content_path),
            "style": str(style_paths[sid]),
            "lambda": lambda_style,
            "output": str(output_path),
        }
        if bridge_jobs <= 1 and tile_idx > 0:
            # chain warm starts through the bridge's weight sidecar files
            prev = jobs_dir / f"tile_{tile_idx - 1:05}_out.png.weights.npz"
            job["warm_start"] = str(prev)
        job_path = jobs_dir / f"job_{tile_idx:05}.json"
        write_json(job_path, job)
        jobs.append((job_path, group))
        for _, name in group:
            assignments[name] = sid

    if bridge_jobs <= 1:
        for job_path, _ in jobs:
            _run_bridge(exe, job_path)
    else:
        with ThreadPoolExecutor(max_workers=bridge_jobs) as pool:
            list(pool.map(lambda jp: _run_bridge(exe, jp[0]), jobs))

    for t, (job_path, group) in enumerate(jobs):
        tile_out = pngio.load_rgb(jobs_dir / f"tile_{t:05}_out.png")
        for part, (_, name) in zip(split_tile(tile_out, patch_size, len(group)), group):
            pngio.save_rgb(out_dir / name, part)
    return assignments
