"""Neighbour voltage prediction, wake-up desynchronization and layer offloading."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Container, Mapping, Sequence

import numpy as np

from harvestnet.profiles import SplitMap


class UnknownNeighbor(KeyError):
    pass


@dataclass
class BeliefEntry:
    last_voltage: float
    last_time: float
    own_voltage_at_last: float
    delta_offset: float = 0.0
    reports: int = 1


@dataclass
class BeliefMap:
    """What one node thinks its neighbours' batteries look like."""

    v_min: float = 3.0
    v_max: float = 4.2
    beta: float = 0.2
    entries: dict[int, BeliefEntry] = field(default_factory=dict)

    def __contains__(self, j: int) -> bool:
        return j in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def predict(self, j: int, v_i_now: float, now: float) -> float:
        try:
            entry = self.entries[j]
        except KeyError:
            raise UnknownNeighbor(j) from None
        return predict_voltage(entry, v_i_now, now, self.v_min, self.v_max)


def predict_voltage(entry: BeliefEntry, v_i_now: float, now: float,
                    v_min: float = -math.inf, v_max: float = math.inf) -> float:
    """Last report shifted by our own voltage change since then, plus the learned bias."""
    v = entry.last_voltage + (v_i_now - entry.own_voltage_at_last) + entry.delta_offset
    return min(max(v, v_min), v_max)


def update_belief(belief: BeliefMap, sender: int, sender_voltage: float,
                  v_i_now: float, now: float) -> BeliefMap:
    entry = belief.entries.get(sender)
    if entry is None:
        belief.entries[sender] = BeliefEntry(sender_voltage, now, v_i_now)
        return belief
    predicted = predict_voltage(entry, v_i_now, now, belief.v_min, belief.v_max)
    entry.delta_offset = (1 - belief.beta) * entry.delta_offset + belief.beta * (sender_voltage - predicted)
    entry.last_voltage = sender_voltage
    entry.last_time = now
    entry.own_voltage_at_last = v_i_now
    entry.reports += 1
    return belief


@dataclass(frozen=True)
class DesyncParams:
    t_base: float = 60.0
    t_min: float = 1.0
    t_max: float = 10.0

    def __post_init__(self):
        if not 0 <= self.t_min < self.t_max:
            raise ValueError("need 0 <= backoff_min < backoff_max")
        if not self.t_base > 0:
            raise ValueError("t_base must be positive")


@dataclass(frozen=True)
class OffloadParams:
    alpha: float = 0.02

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


def next_sleep(params: DesyncParams, overlap: bool, rng: np.random.Generator) -> float:
    if not overlap:
        return params.t_base
    return params.t_base + float(rng.uniform(params.t_min, params.t_max))


def decide_layers(v_i: float, v_hat_j: float, split_map: SplitMap, params: OffloadParams,
                  start: int = 0) -> int:
    """How many layers (from ``start``) to keep.

    Largest ``L`` with ``v_i - v_req(L) > v_hat_j + alpha``; 0 when none pass.
    """
    threshold = v_hat_j + params.alpha
    for n in range(split_map.n_layers - start, 0, -1):
        if v_i - split_map.segment_v_req(start, n) > threshold:
            return n
    return 0


def pick_offload_target(belief: BeliefMap, v_i_now: float, now: float,
                        me: tuple[float, float], positions: Mapping[int, tuple[float, float]] | Sequence,
                        radius: float, exclude: Container[int] = (),
                        heard_since: float | None = None) -> int | None:
    """Richest predicted in-range neighbour strictly above our own voltage.

    ``heard_since`` drops neighbours whose last report is older than that
    time.
    """
    best = None
    for j in sorted(belief.entries):
        if j in exclude:
            continue
        entry = belief.entries[j]
        if heard_since is not None and entry.last_time < heard_since:
            continue
        px, py = positions[j]
        if math.hypot(px - me[0], py - me[1]) > radius:
            continue
        v = predict_voltage(entry, v_i_now, now, belief.v_min, belief.v_max)
        if v > v_i_now and (best is None or v > best[0]):
            best = (v, j)
    return None if best is None else best[1]
