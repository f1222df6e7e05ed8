"""Colony overlap graph and connected-cluster extraction.

Colonies whose bounding boxes overlap by more than a threshold fraction of
the smaller box's area are considered connected; connected components of
that graph are the clusters segmented and placed as one unit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus size, in pixels."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box {self}")

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def translated(self, dx: int, dy: int) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


def intersection_area(a: BBox, b: BBox) -> int:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def overlap_fraction(a: BBox, b: BBox) -> float:
    """Intersection area divided by the smaller box's area (symmetric)."""
    return intersection_area(a, b) / min(a.area, b.area)


def build_adjacency(boxes: list[BBox], threshold: float = 0.01) -> np.ndarray:
    """Boolean adjacency matrix: edge iff overlap fraction strictly exceeds
    ``threshold``. Symmetric with a false diagonal."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    n = len(boxes)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            if overlap_fraction(boxes[i], boxes[j]) > threshold:
                adj[i, j] = adj[j, i] = True
    return adj


def connected_components(adj: np.ndarray) -> list[list[int]]:
    """Breadth-first connected components of an adjacency matrix.

    Returns sorted member lists, with groups ordered by their smallest
    member index so the partition is deterministic.
    """
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise ValueError("adjacency matrix must be square")
    seen = np.zeros(n, dtype=bool)
    groups = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        group = [start]
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nb in np.nonzero(adj[node])[0]:
                if not seen[nb]:
                    seen[nb] = True
                    group.append(int(nb))
                    queue.append(int(nb))
        groups.append(sorted(group))
    return groups
