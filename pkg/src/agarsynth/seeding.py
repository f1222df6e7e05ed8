"""Deterministic seed derivation.

Every unit of parallel work gets its own generator seeded by a published
hash so results do not depend on worker count or scheduling:

    seed = first 8 bytes (big-endian) of SHA-256("agarsynth\\0" + parts
    joined with "\\0")

where parts are the master seed and the unit labels (e.g. image id and
cluster index, or "patch" and patch index) rendered with str().
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    payload = "\0".join(["agarsynth"] + [str(p) for p in parts])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(*parts) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
