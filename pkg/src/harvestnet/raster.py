"""Disk rasterization on a regular grid of cell centres."""

from __future__ import annotations

import numpy as np


def disk_cells(cx: np.ndarray, cy: np.ndarray, px: float, py: float, radius: float) -> np.ndarray:
    nx = len(cx)
    ix = np.nonzero(np.abs(cx - px) <= radius)[0]
    iy = np.nonzero(np.abs(cy - py) <= radius)[0]
    if len(ix) == 0 or len(iy) == 0:
        return np.empty(0, dtype=np.int64)
    dx2 = (cx[ix] - px) ** 2
    dy2 = (cy[iy] - py) ** 2
    inside = dy2[:, None] + dx2[None, :] <= radius * radius
    rows, cols = np.nonzero(inside)
    return (iy[rows] * nx + ix[cols]).astype(np.int64)


def covered_cells(cx: np.ndarray, cy: np.ndarray, px: np.ndarray, py: np.ndarray, radius: float) -> int:
    mask = np.zeros(len(cx) * len(cy), dtype=bool)
    for x, y in zip(px, py):
        mask[disk_cells(cx, cy, float(x), float(y), radius)] = True
    return int(np.count_nonzero(mask))


class CellCounter:
    """Per-cell count of how many active disks cover it."""

    def __init__(self, n_cells: int):
        self.counts = np.zeros(n_cells, dtype=np.int32)
        self.covered = 0

    def add(self, cells: np.ndarray) -> int:
        c = self.counts
        c[cells] += 1
        self.covered += int(np.count_nonzero(c[cells] == 1))
        return self.covered

    def remove(self, cells: np.ndarray) -> int:
        c = self.counts
        c[cells] -= 1
        self.covered -= int(np.count_nonzero(c[cells] == 0))
        return self.covered
