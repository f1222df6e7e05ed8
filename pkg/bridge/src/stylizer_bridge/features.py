"""Feature extractors for the Gram-matrix training loss.

Two backends:

* ``vgg19`` - pretrained VGG19 activations (relu1_2/2_2/3_4/4_4). Needs the
  torchvision checkpoint on disk; there is no silent fallback when it is
  missing because losses from untrained weights are not comparable.
* ``builtin`` - a frozen bank of seed-derived 3x3 filters applied at three
  average-pooled scales. This is the same filter recipe agarsynth uses for
  its loss bookkeeping, so bridge outputs score sensibly under the
  pipeline's own loss. It needs no checkpoint and is the backend the test
  suite runs on.
"""

from __future__ import annotations

import os

import numpy as np
import torch
import torch.nn.functional as F

FILTER_SEED = 51966  # frozen; shared with the pipeline's loss features
N_FILTERS = 8

VGG19_SLICES = (4, 9, 18, 27)  # activations after relu1_2, relu2_2, relu3_4, relu4_4
_IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1)
_IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1)


class FeatureUnavailable(RuntimeError):
    """Pretrained feature weights could not be loaded."""


class BuiltinFeatures(torch.nn.Module):
    def __init__(self):
        super().__init__()
        rng = np.random.default_rng(FILTER_SEED)
        w = rng.normal(size=(N_FILTERS, 3, 3, 3)) / np.sqrt(27.0)
        # (out, ky, kx, in) -> (out, in, ky, kx)
        self.register_buffer(
            "weight", torch.tensor(np.transpose(w, (0, 3, 1, 2)), dtype=torch.float32)
        )

    def forward(self, img: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        cur = img
        for _ in range(3):
            padded = F.pad(cur, (1, 1, 1, 1), mode="replicate")
            feats.append(F.conv2d(padded, self.weight))
            if min(cur.shape[-2:]) < 4:
                break
            cur = F.avg_pool2d(cur, 2)
        return feats


class Vgg19Features(torch.nn.Module):
    def __init__(self):
        super().__init__()
        self.body = _load_vgg19_body()
        for p in self.body.parameters():
            p.requires_grad_(False)
        self.body.eval()

    def forward(self, img: torch.Tensor) -> list[torch.Tensor]:
        x = (img - _IMAGENET_MEAN.to(img)) / _IMAGENET_STD.to(img)
        feats = []
        for i, layer in enumerate(self.body):
            x = layer(x)
            if i + 1 in VGG19_SLICES:
                feats.append(x)
        return feats


def _load_vgg19_body():
    from torchvision.models import vgg19

    override = os.environ.get("BRIDGE_VGG19_WEIGHTS", "")
    try:
        if override:
            model = vgg19(weights=None)
            state = torch.load(override, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        else:
            from torchvision.models import VGG19_Weights

            model = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
    except Exception as exc:
        raise FeatureUnavailable(
            "pretrained VGG19 weights are unavailable "
            f"({type(exc).__name__}: {exc}). Place the torchvision checkpoint "
            "under $TORCH_HOME/hub/checkpoints, point BRIDGE_VGG19_WEIGHTS at a "
            "vgg19 state_dict file, or run with --features builtin"
        ) from exc
    return model.features[: max(VGG19_SLICES)]


def make_features(kind: str) -> torch.nn.Module:
    if kind == "builtin":
        return BuiltinFeatures()
    if kind == "vgg19":
        return Vgg19Features()
    raise ValueError(f"unknown feature backend '{kind}' (vgg19 or builtin)")


def gram(fm: torch.Tensor) -> torch.Tensor:
    """Gram matrix of a (1, C, H, W) feature map, normalized by C*H*W."""
    _, c, h, w = fm.shape
    flat = fm.reshape(c, h * w)
    return (flat @ flat.T) / (c * h * w)


def weighted_gram_loss(
    feats_y: list[torch.Tensor],
    grams_c: list[torch.Tensor],
    grams_s: list[torch.Tensor],
    weight: float,
) -> torch.Tensor:
    """(1 - w) * sum ||G(y)-G(y_c)||_F^2 + w * sum ||G(y)-G(y_s)||_F^2.

    The squared form matters: with plain norms any style weight below 0.5
    is minimized exactly by the content image (the weighted two-point
    median is the heavier endpoint), so small weights would never move the
    output. Squared distances put the optimum at the weighted mean of the
    two Gram targets, which is what makes a 0.02..0.05 style weight
    produce a visible, smoothly increasing stylization.
    """
    grams_y = [gram(f) for f in feats_y]
    content = sum(torch.sum((gy - gc) ** 2) for gy, gc in zip(grams_y, grams_c))
    style = sum(torch.sum((gy - gs) ** 2) for gy, gs in zip(grams_y, grams_s))
    return (1.0 - weight) * content + weight * style
