"""8-bit PNG I/O. Images are float in [0, 1] everywhere else in the pipeline."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import RgbaFragment


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return np.rint(255.0 * np.clip(arr, 0.0, 1.0)).astype(np.uint8)


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=float)
    return arr / 255.0


def save_rgb(path, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_u8(img), mode="RGB").save(path)


def load_rgba(path) -> RgbaFragment:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGBA"), dtype=float) / 255.0
    return RgbaFragment(color=arr[..., :3], alpha=arr[..., 3])


def save_rgba(path, frag: RgbaFragment) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    rgba = np.dstack([frag.color, frag.alpha])
    Image.fromarray(_to_u8(rgba), mode="RGBA").save(path)
