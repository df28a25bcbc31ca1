"""Deployment geometry: hex lattice, environments, acoustic events, coverage."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from harvestnet import raster
from harvestnet.energy import SHADY, SUNNY, EnvClass


class Position(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle rasterized into square cells.

    Cells are ``resolution`` metres wide; the last row/column may hang over
    the far edge by less than one cell.
    """

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    resolution: float = 1.0

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("raster resolution must be positive")
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ValueError("empty region")

    @classmethod
    def around(cls, positions: Sequence[Position], resolution: float = 1.0) -> "Region":
        xs = [p.x for p in positions]
        ys = [p.y for p in positions]
        return cls(min(xs), min(ys), max(xs), max(ys), resolution)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        nx = max(1, math.ceil(self.width / self.resolution - 1e-9))
        ny = max(1, math.ceil(self.height / self.resolution - 1e-9))
        return ny, nx

    @property
    def n_cells(self) -> int:
        ny, nx = self.shape
        return nx * ny

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        cx = self.xmin + (np.arange(nx) + 0.5) * self.resolution
        cy = self.ymin + (np.arange(ny) + 0.5) * self.resolution
        return cx, cy

    def contains(self, p: Position, tol: float = 1e-9) -> bool:
        return (self.xmin - tol <= p.x <= self.xmax + tol
                and self.ymin - tol <= p.y <= self.ymax + tol)

    def disk_cells(self, p: Position, radius: float) -> np.ndarray:
        """Flat indices of cells whose centre lies within ``radius`` of ``p``."""
        cx, cy = self.cell_centers()
        return raster.disk_cells(cx, cy, p.x, p.y, radius)


@dataclass
class AcousticEvent:
    time: float
    position: Position
    duration: float = 5.0
    captured_by: int | None = None

    @property
    def end(self) -> float:
        return self.time + self.duration


def build_hex_grid(n_nodes: int, spacing: float) -> list[Position]:
    """Triangular lattice filled row by row, as close to square as possible.

    Odd rows shift right by half a spacing; rows sit ``spacing*sqrt(3)/2``
    apart so every nearest-neighbour pair is exactly ``spacing`` apart.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    cols = math.ceil(math.sqrt(n_nodes))
    pitch = spacing * math.sqrt(3) / 2
    out = []
    for i in range(n_nodes):
        r, c = divmod(i, cols)
        out.append(Position(c * spacing + (r % 2) * spacing / 2, r * pitch))
    return out


def assign_env(positions: Sequence[Position], ratio: float, rng: np.random.Generator,
               sunny: EnvClass = SUNNY, shady: EnvClass = SHADY) -> list[EnvClass]:
    if not 0 <= ratio <= 1:
        raise ValueError("sunny ratio must lie in [0, 1]")
    n = len(positions)
    n_sunny = int(math.floor(ratio * n + 0.5))
    order = rng.permutation(n)
    env = [shady] * n
    for i in order[:n_sunny]:
        env[int(i)] = sunny
    return env


def gen_events(rate_per_hour: float, duration: float, region: Region, rng: np.random.Generator,
               event_duration: float = 5.0, fixed_count: bool = False) -> list[AcousticEvent]:
    """Homogeneous Poisson arrivals, uniform positions over ``region``.

    ``fixed_count`` replaces the Poisson draw with the rounded mean.
    """
    if rate_per_hour < 0:
        raise ValueError("event rate must be non-negative")
    mean = rate_per_hour * duration / 3600.0
    if mean <= 0:
        return []
    n = int(round(mean)) if fixed_count else int(rng.poisson(mean))
    times = np.sort(rng.uniform(0.0, duration, n))
    xs = rng.uniform(region.xmin, region.xmax, n)
    ys = rng.uniform(region.ymin, region.ymax, n)
    return [AcousticEvent(float(t), Position(float(x), float(y)), event_duration)
            for t, x, y in zip(times, xs, ys)]


def coverage_fraction(sensing_positions: Sequence[Position], radius: float, region: Region) -> float:
    if not radius > 0:
        raise ValueError("radius must be positive")
    if not sensing_positions:
        return 0.0
    cx, cy = region.cell_centers()
    px = np.array([p.x for p in sensing_positions], dtype=float)
    py = np.array([p.y for p in sensing_positions], dtype=float)
    return raster.covered_cells(cx, cy, px, py, radius) / region.n_cells


def _overlap(intervals: Sequence[tuple[float, float]], starts: Sequence[float], a: float, b: float) -> float:
    """Longest single overlap between sorted disjoint ``intervals`` and [a, b]."""
    best = 0.0
    i = bisect_right(starts, b)
    while i > 0:
        i -= 1
        s, e = intervals[i]
        if e <= a:
            break
        best = max(best, min(e, b) - max(s, a))
    return best


def event_captured(event: AcousticEvent, sensing_intervals: Sequence[Sequence[tuple[float, float]]],
                   positions: Sequence[Position], radius: float, min_overlap: float = 0.5,
                   candidates: Sequence[int] | None = None) -> int | None:
    """Nearest node (then lowest id) that was sensing during the event.

    ``sensing_intervals[i]`` must be sorted and non-overlapping. A node
    qualifies when it lies within ``radius`` and one of its windows shares
    at least ``min_overlap`` seconds with the event (capped at the event
    length).
    """
    need = min(min_overlap, event.duration)
    ex, ey = event.position
    best = None
    ids = range(len(positions)) if candidates is None else candidates
    for i in ids:
        p = positions[i]
        d = math.hypot(p.x - ex, p.y - ey)
        if d > radius:
            continue
        iv = sensing_intervals[i]
        if not iv:
            continue
        starts = [s for s, _ in iv]
        ov = _overlap(iv, starts, event.time, event.end)
        if ov <= 0 or ov + 1e-12 < need:
            continue
        if best is None or (d, i) < best:
            best = (d, i)
    return None if best is None else best[1]
