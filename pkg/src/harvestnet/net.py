"""Fixed-radius broadcast radio with a voltage field in every frame header."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from harvestnet.energy import EnergyStore, drain
from harvestnet.profiles import (
    HardwareProfile, Operation, TransmitBeacon, duration_of, energy_of, handoff_op, payload_bytes_of,
)

US = 1_000_000


class PacketKind(enum.Enum):
    BEACON = "beacon"
    TASK = "task"
    RESULT = "result"


@dataclass(frozen=True)
class Packet:
    sender: int
    sender_voltage: float
    kind: PacketKind
    payload_bytes: int
    sent_at_us: int
    airtime_us: int
    energy: float
    layers_done: int = 0
    target: int | None = None
    origin: int | None = None
    task_id: int | None = None
    created_at_us: int = 0
    hop_count: int = 0

    @property
    def sent_at(self) -> float:
        return self.sent_at_us / US

    @property
    def airtime(self) -> float:
        return self.airtime_us / US

    @property
    def arrives_at_us(self) -> int:
        return self.sent_at_us + self.airtime_us


def frame_op(profile: HardwareProfile, kind: PacketKind, layers_done: int = 0) -> Operation:
    if kind is PacketKind.BEACON:
        return TransmitBeacon()
    if kind is PacketKind.RESULT:
        return handoff_op(profile, profile.n_layers)
    return handoff_op(profile, layers_done)


def make_packet(profile: HardwareProfile, kind: PacketKind, sender: int, sender_voltage: float,
                sent_at_us: int, layers_done: int = 0, **task) -> Packet:
    """Build a frame whose size, airtime and energy come from the profile."""
    op = frame_op(profile, kind, layers_done)
    return Packet(
        sender=sender,
        sender_voltage=sender_voltage,
        kind=kind,
        payload_bytes=payload_bytes_of(profile, op),
        sent_at_us=sent_at_us,
        airtime_us=round(duration_of(profile, op) * US),
        energy=energy_of(profile, op),
        layers_done=layers_done,
        **task,
    )


def in_range(a: tuple[float, float], b: tuple[float, float], radius: float) -> bool:
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= radius


def neighbor_table(positions: Sequence[tuple[float, float]], radius: float) -> list[tuple[int, ...]]:
    """For each node, the other nodes within ``radius`` in id order."""
    n = len(positions)
    return [tuple(j for j in range(n) if j != i and in_range(positions[i], positions[j], radius))
            for i in range(n)]


@dataclass(frozen=True)
class Delivery:
    packet: Packet
    at_us: int
    candidates: tuple[int, ...]


def transmit(store: EnergyStore, packet: Packet, neighbors: Sequence[int]) -> Delivery:
    """Charge the sender for the frame and address it to everyone in range.

    Whether each candidate actually hears it is decided at ``at_us`` by
    whoever owns the receivers. Raises :class:`~harvestnet.energy.Depleted`
    if the sender cannot pay for the frame.
    """
    drain(store, packet.energy)
    return Delivery(packet, packet.arrives_at_us, tuple(j for j in neighbors if j != packet.sender))
