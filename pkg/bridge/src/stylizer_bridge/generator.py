"""Image generation network: a small two-branch high-resolution model.

A full-resolution branch preserves detail while a pooled branch sees wider
context; both are fused and the network emits a bounded residual on top of
its input, so even an untrained generator stays close to the content image
and a warm start only has to adapt the stylization delta.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class HighResGenerator(nn.Module):
    def __init__(self, width: int = 16):
        super().__init__()
        self.stem = nn.Conv2d(3, width, 3, padding=1)
        self.hi1 = nn.Conv2d(width, width, 3, padding=1)
        self.hi2 = nn.Conv2d(width, width, 3, padding=1)
        self.lo1 = nn.Conv2d(width, 2 * width, 3, padding=1)
        self.lo2 = nn.Conv2d(2 * width, 2 * width, 3, padding=1)
        self.fuse = nn.Conv2d(3 * width, width, 3, padding=1)
        self.head = nn.Conv2d(width, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.stem(x))
        hi = F.relu(self.hi2(F.relu(self.hi1(h))))
        lo = F.avg_pool2d(h, 2)
        lo = F.relu(self.lo2(F.relu(self.lo1(lo))))
        lo = F.interpolate(lo, size=h.shape[-2:], mode="bilinear", align_corners=False)
        fused = F.relu(self.fuse(torch.cat([hi, lo], dim=1)))
        return x + 0.5 * torch.tanh(self.head(fused))
