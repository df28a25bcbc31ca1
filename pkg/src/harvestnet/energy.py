"""Battery bookkeeping, solar harvesting and the sleep/wake hysteresis gate."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Phase(enum.Enum):
    OPERATIONAL = "operational"
    DEEP_SLEEP = "deep_sleep"


class Depleted(Exception):
    """A drain asked for more charge than the store holds.

    The store is left empty; the caller must abort whatever it was doing.
    """

    def __init__(self, shortfall: float):
        self.shortfall = shortfall
        super().__init__(f"brownout: short by {shortfall:.6g} J")


@dataclass(frozen=True)
class BatteryModel:
    capacity_mah: float = 50.0
    nominal_v: float = 3.3
    v_min: float = 3.0
    v_max: float = 4.2
    lower_threshold: float = 0.01
    recovery_threshold: float = 0.20

    def __post_init__(self):
        if not 0 < self.lower_threshold < self.recovery_threshold < 1:
            raise ValueError("need 0 < lower_threshold < recovery_threshold < 1")
        if not self.v_min < self.v_max:
            raise ValueError("need v_min < v_max")
        if not self.capacity_j > 0:
            raise ValueError("capacity must be positive")

    @property
    def capacity_j(self) -> float:
        return self.capacity_mah * 3.6 * self.nominal_v

    @property
    def volts_per_joule(self) -> float:
        return (self.v_max - self.v_min) / self.capacity_j

    def soc_from_voltage(self, volts: float) -> float:
        return (volts - self.v_min) / (self.v_max - self.v_min) * self.capacity_j


@dataclass(frozen=True)
class EnvClass:
    kind: str
    harvest_uw: float

    def __post_init__(self):
        if not self.harvest_uw > 0:
            raise ValueError("harvest power must be positive")

    @property
    def harvest_w(self) -> float:
        return self.harvest_uw * 1e-6


SUNNY = EnvClass("sunny", 300.0)
SHADY = EnvClass("shady", 50.0)


@dataclass
class EnergyStore:
    """Charge held by one node plus a running ledger.

    ``harvested`` counts the offered amount before clamping and ``wasted``
    the part that found the store full, so
    ``soc == initial + harvested - wasted - consumed`` at all times.
    """

    capacity: float
    soc: float
    initial: float | None = None
    harvested: float = 0.0
    wasted: float = 0.0
    consumed: float = 0.0

    def __post_init__(self):
        if not 0 <= self.soc <= self.capacity:
            raise ValueError(f"soc {self.soc} outside [0, {self.capacity}]")
        if self.initial is None:
            self.initial = self.soc

    @property
    def fraction(self) -> float:
        return self.soc / self.capacity

    @property
    def harvested_applied(self) -> float:
        return self.harvested - self.wasted

    def balance_error(self) -> float:
        return self.initial + self.harvested - self.wasted - self.consumed - self.soc


def harvest(store: EnergyStore, env: EnvClass, dt: float) -> EnergyStore:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return add_charge(store, env.harvest_w * dt)


def add_charge(store: EnergyStore, amount: float) -> EnergyStore:
    if amount <= 0:
        return store
    room = store.capacity - store.soc
    store.harvested += amount
    if amount > room:
        store.wasted += amount - room
        store.soc = store.capacity
    else:
        store.soc += amount
    return store


def drain(store: EnergyStore, amount: float) -> EnergyStore:
    """Remove ``amount`` joules, raising :class:`Depleted` on a brownout."""
    if amount < 0:
        raise ValueError("amount must be non-negative")
    if amount > store.soc:
        shortfall = amount - store.soc
        store.consumed += store.soc
        store.soc = 0.0
        raise Depleted(shortfall)
    store.consumed += amount
    store.soc -= amount
    return store


def exchange(store: EnergyStore, harvested: float, consumed: float) -> EnergyStore:
    """Apply simultaneous inflow and outflow over one interval.

    Only the net flow can hit the ceiling, so a node that draws more than it
    harvests never wastes charge. Raises :class:`Depleted` if the net flow
    empties the store.
    """
    if harvested < 0 or consumed < 0:
        raise ValueError("flows must be non-negative")
    store.harvested += harvested
    net = harvested - consumed
    if net >= 0:
        room = store.capacity - store.soc
        if net > room:
            store.wasted += net - room
            store.soc = store.capacity
        else:
            store.soc += net
        store.consumed += consumed
        return store
    if -net > store.soc:
        shortfall = -net - store.soc
        store.consumed += harvested + store.soc
        store.soc = 0.0
        raise Depleted(shortfall)
    store.soc += net
    store.consumed += consumed
    return store


def voltage_of(store: EnergyStore, battery: BatteryModel) -> float:
    return battery.v_min + store.soc / battery.capacity_j * (battery.v_max - battery.v_min)


def lifecycle_gate(soc_fraction: float, phase: Phase, battery: BatteryModel) -> Phase:
    if phase is Phase.OPERATIONAL and soc_fraction < battery.lower_threshold:
        return Phase.DEEP_SLEEP
    if phase is Phase.DEEP_SLEEP and soc_fraction >= battery.recovery_threshold:
        return Phase.OPERATIONAL
    return phase


def time_to_reach(store: EnergyStore, target: float, net_power: float) -> float:
    """Seconds until soc hits ``target`` under constant ``net_power`` (W).

    Returns ``inf`` if the store is moving away from (or parked short of)
    the target.
    """
    gap = target - store.soc
    if gap == 0:
        return 0.0
    if net_power == 0 or (gap > 0) != (net_power > 0):
        return float("inf")
    return gap / net_power
