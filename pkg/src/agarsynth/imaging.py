"""Image buffers, color conversion, filtering and mask algebra.

Conventions used across the pipeline:

* RGB images are float arrays of shape (H, W, 3) with sRGB values in [0, 1].
* Lab images are float arrays of shape (H, W, 3): L in [0, 100], a/b roughly
  in [-128, 128], D65 reference white.
* Masks are float arrays of shape (H, W) with values in [0, 1]; binary masks
  use only {0, 1}.

8-bit quantization happens only at PNG I/O (see :mod:`agarsynth.pngio`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# sRGB <-> XYZ (IEC 61966-2-1 primaries). The reference white is the image of
# RGB=(1,1,1), i.e. the matrix row sums, so white maps to Lab (100, 0, 0)
# exactly.
_RGB2XYZ = np.array(
    [
        [0.4124, 0.3576, 0.1805],
        [0.2126, 0.7152, 0.0722],
        [0.0193, 0.1192, 0.9505],
    ]
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = _RGB2XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0


@dataclass
class RgbaFragment:
    """An RGB image plus an alpha mask of identical spatial dimensions."""

    color: np.ndarray  # (H, W, 3) in [0, 1]
    alpha: np.ndarray  # (H, W) in [0, 1]

    def __post_init__(self):
        if self.color.shape[:2] != self.alpha.shape:
            raise ValueError(
                f"alpha shape {self.alpha.shape} does not match "
                f"color shape {self.color.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.color.shape[0]

    @property
    def width(self) -> int:
        return self.color.shape[1]


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    # negative inputs only occur out of gamut; keep the power branch defined
    safe = np.maximum(c, 0.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * safe ** (1 / 2.4) - 0.055)


def _lab_f(t):
    safe = np.maximum(t, 0.0)
    return np.where(t > _DELTA**3, np.cbrt(safe), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(u):
    return np.where(u > _DELTA, u**3, 3 * _DELTA**2 * (u - 4.0 / 29.0))


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image in [0, 1] to CIELab (D65), per pixel."""
    lin = _srgb_to_linear(np.asarray(img, dtype=float))
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    # explicit elementwise form keeps results bit-stable across BLAS configs
    fx = _lab_f((_RGB2XYZ[0, 0] * r + _RGB2XYZ[0, 1] * g + _RGB2XYZ[0, 2] * b) / _WHITE[0])
    fy = _lab_f((_RGB2XYZ[1, 0] * r + _RGB2XYZ[1, 1] * g + _RGB2XYZ[1, 2] * b) / _WHITE[1])
    fz = _lab_f((_RGB2XYZ[2, 0] * r + _RGB2XYZ[2, 1] * g + _RGB2XYZ[2, 2] * b) / _WHITE[2])
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rgb_to_lab`; out-of-gamut results are clamped to [0, 1]."""
    lab = np.asarray(lab, dtype=float)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    x = _lab_f_inv(fx) * _WHITE[0]
    y = _lab_f_inv(fy) * _WHITE[1]
    z = _lab_f_inv(fz) * _WHITE[2]
    lin = np.stack(
        [
            _XYZ2RGB[0, 0] * x + _XYZ2RGB[0, 1] * y + _XYZ2RGB[0, 2] * z,
            _XYZ2RGB[1, 0] * x + _XYZ2RGB[1, 1] * y + _XYZ2RGB[1, 2] * z,
            _XYZ2RGB[2, 0] * x + _XYZ2RGB[2, 1] * y + _XYZ2RGB[2, 2] * z,
        ],
        axis=-1,
    )
    return np.clip(_linear_to_srgb(lin), 0.0, 1.0)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian sampled on integer offsets, truncated at 3*sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with symmetric boundary handling."""
    k = gaussian_kernel_1d(sigma)
    out = ndimage.convolve1d(np.asarray(img, dtype=float), k, axis=0, mode="reflect")
    return ndimage.convolve1d(out, k, axis=1, mode="reflect")


def unsharp_mask(img: np.ndarray, radius: float, amount: float) -> np.ndarray:
    """Sharpen by adding ``amount`` times the difference to a Gaussian blur.

    ``radius`` is the Gaussian sigma in pixels. ``amount = 0`` returns the
    input unchanged. Output is clamped back to [0, 1].
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if amount < 0:
        raise ValueError("amount must be >= 0")
    img = np.asarray(img, dtype=float)
    if amount == 0:
        return img.copy()
    return np.clip(img + amount * (img - gaussian_blur(img, radius)), 0.0, 1.0)


def disk_footprint(radius: float) -> np.ndarray:
    """Boolean disk: integer offsets whose Euclidean distance is <= radius."""
    r = int(np.floor(radius))
    yy, xx = np.ogrid[-r : r + 1, -r : r + 1]
    return (yy * yy + xx * xx) <= radius * radius


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """Morphological dilation of a binary mask with a Euclidean disk element."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    mask = np.asarray(mask, dtype=float)
    if radius < 1:
        return (mask > 0.5).astype(float)
    out = ndimage.binary_dilation(mask > 0.5, structure=disk_footprint(radius))
    return out.astype(float)


def nl_means_patch_kernel(patch: int) -> np.ndarray:
    """Normalized Gaussian weights over patch offsets (sigma = max(r/2, 0.5))."""
    r = patch // 2
    sigma = max(r / 2.0, 0.5)
    o = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-(o[:, None] ** 2 + o[None, :] ** 2) / (2.0 * sigma**2))
    return k / k.sum()


def nl_means_denoise(img: np.ndarray, h: float, patch: int, window: int) -> np.ndarray:
    """Non-local means denoising.

    Each output pixel is a weighted average of the pixels in its search
    window; the weight of candidate q for pixel p is

        w(p, q) = exp(-d2(p, q) / h**2)

    where d2 is the channel-mean squared patch difference, weighted by a
    normalized Gaussian over patch offsets (see
    :func:`nl_means_patch_kernel`). Patches are taken on a symmetric-padded
    copy of the image; the search window is clipped at the image border.

    Parameters
    ----------
    img : (H, W, 3) or (H, W) float array
    h : filter strength, > 0
    patch : odd patch edge length in pixels
    window : odd search window edge length in pixels
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    if patch % 2 == 0 or window % 2 == 0:
        raise ValueError("patch and window must be odd")
    img = np.asarray(img, dtype=float)
    single = img.ndim == 2
    if single:
        img = img[..., None]
    hgt, wid = img.shape[:2]
    pr, wr = patch // 2, window // 2

    # 1-D factors of the separable patch kernel (normalized via their outer sum)
    sigma = max(pr / 2.0, 0.5)
    o = np.arange(-pr, pr + 1, dtype=float)
    g1 = np.exp(-(o**2) / (2.0 * sigma**2))
    norm = np.outer(g1, g1).sum()

    padded = np.pad(img, [(pr, pr), (pr, pr), (0, 0)], mode="symmetric")
    num = np.zeros_like(img)
    den = np.zeros((hgt, wid))
    for dy in range(-wr, wr + 1):
        for dx in range(-wr, wr + 1):
            ys, ye = max(0, -dy), hgt - max(0, dy)
            xs, xe = max(0, -dx), wid - max(0, dx)
            if ys >= ye or xs >= xe:
                continue
            # squared difference field on the padded grid, covering every
            # patch offset needed for p in [ys, ye) x [xs, xe)
            a0, a1 = ys, ye + 2 * pr
            b0, b1 = xs, xe + 2 * pr
            diff = padded[a0:a1, b0:b1] - padded[a0 + dy : a1 + dy, b0 + dx : b1 + dx]
            e = np.mean(diff * diff, axis=-1)
            t = ndimage.convolve1d(e, g1, axis=0, mode="constant")
            t = ndimage.convolve1d(t, g1, axis=1, mode="constant")
            d2 = t[pr : t.shape[0] - pr or None, pr : t.shape[1] - pr or None] / norm
            w = np.exp(-d2 / (h * h))
            num[ys:ye, xs:xe] += w[..., None] * img[ys + dy : ye + dy, xs + dx : xe + dx]
            den[ys:ye, xs:xe] += w
    out = num / den[..., None]
    return out[..., 0] if single else out


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two masks; dimensions must match."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def _rotated_canvas_size(h: int, w: int, angle_deg: float) -> tuple[int, int]:
    rad = np.deg2rad(angle_deg)
    c, s = abs(np.cos(rad)), abs(np.sin(rad))
    return int(np.ceil(h * c + w * s)), int(np.ceil(w * c + h * s))


def rotate_channels(stack: np.ndarray, angle: float) -> np.ndarray:
    """Rotate an (H, W, C) stack counterclockwise by ``angle`` degrees.

    Right angles use exact index permutation; other angles use bilinear
    resampling onto a minimally enlarged canvas padded with zeros. All
    channels undergo the identical transform, so companion masks stay
    aligned with the image they annotate.
    """
    stack = np.asarray(stack, dtype=float)
    angle = float(angle) % 360.0
    if angle % 90.0 == 0.0:
        return np.rot90(stack, k=int(angle // 90), axes=(0, 1)).copy()

    h, w = stack.shape[:2]
    oh, ow = _rotated_canvas_size(h, w, angle)
    rad = np.deg2rad(angle)
    c, s = np.cos(rad), np.sin(rad)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ocy, ocx = (oh - 1) / 2.0, (ow - 1) / 2.0
    yy, xx = np.mgrid[0:oh, 0:ow]
    dy = yy - ocy
    dx = xx - ocx
    # inverse map of the forward CCW-on-screen rotation (y axis points down)
    src_x = c * dx - s * dy + cx
    src_y = s * dx + c * dy + cy
    coords = np.stack([src_y.ravel(), src_x.ravel()])
    out = np.empty((oh, ow, stack.shape[2]))
    for ch in range(stack.shape[2]):
        out[..., ch] = ndimage.map_coordinates(
            stack[..., ch], coords, order=1, mode="constant", cval=0.0
        ).reshape(oh, ow)
    return out


def apply_flips(stack: np.ndarray, flip_h: bool, flip_v: bool) -> np.ndarray:
    if flip_h:
        stack = stack[:, ::-1]
    if flip_v:
        stack = stack[::-1, :]
    return np.ascontiguousarray(stack)


def rotate_flip_rgba(
    frag: RgbaFragment, angle: float, flip_h: bool = False, flip_v: bool = False
) -> RgbaFragment:
    """Rotate then flip a fragment; padding added by rotation has alpha 0."""
    stack = np.dstack([frag.color, frag.alpha])
    stack = apply_flips(rotate_channels(stack, angle), flip_h, flip_v)
    return RgbaFragment(color=stack[..., :3], alpha=stack[..., 3])
