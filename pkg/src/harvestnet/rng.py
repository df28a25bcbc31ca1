"""Named, seed-derived random streams.

Every consumer draws from its own generator keyed by ``(seed, label,
index)``, so adding a node or reordering the event loop never shifts
another stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, label: str, index: int | None = None) -> int:
    key = f"{seed}/{label}" if index is None else f"{seed}/{label}/{index}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:16], "little")


def stream(seed: int, label: str, index: int | None = None) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, label, index)))
