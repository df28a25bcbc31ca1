"""Per-node runtime: the sense / hand over / compute / sleep cycle.

:func:`step` is the only entry point. The engine calls it when one of the
node's timers fires (empty inbox) or when a frame reaches it (one packet in
the inbox). It mutates the node in place and returns what the engine has to
act on. The node keeps time in integer microseconds.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from harvestnet import coord
from harvestnet.coord import BeliefMap, DesyncParams, OffloadParams
from harvestnet.energy import (
    BatteryModel, Depleted, EnergyStore, EnvClass, Phase, drain, exchange, lifecycle_gate, voltage_of,
)
from harvestnet.net import US, Packet, PacketKind, make_packet
from harvestnet.profiles import (
    HardwareProfile, Infer, Sense, SplitMap, Transmit, TransmitBeacon, duration_of, energy_of,
)


class Mode(enum.Enum):
    VANILLA = "vanilla"
    ALGORITHM = "algorithm"


class NodePhase(enum.Enum):
    DEEP_SLEEP = "deep_sleep"
    SLEEPING = "sleeping"
    SENSING = "sensing"
    HANDOVER = "handover"
    COMPUTING = "computing"
    TRANSMITTING = "transmitting"
    IDLE = "idle"


RECEIVE_CAPABLE = frozenset({NodePhase.SENSING, NodePhase.HANDOVER, NodePhase.IDLE, NodePhase.COMPUTING})


@dataclass
class Task:
    task_id: int
    origin: int
    layers_done: int
    payload_bytes: int
    created_at_us: int
    hop_count: int = 0
    sender: int | None = None
    sender_voltage: float | None = None


# -- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class StartSensing:
    duration_us: int


@dataclass(frozen=True)
class EmitPacket:
    packet: Packet


@dataclass(frozen=True)
class RunLayers:
    task: Task
    count: int


@dataclass(frozen=True)
class EnterDeepSleep:
    aborted_tasks: int = 0


@dataclass(frozen=True)
class ScheduleWake:
    at_us: int | None


@dataclass(frozen=True)
class TaskDone:
    task: Task
    how: str  # "completed" | "offloaded" | "dropped" | "forwarded" | "ignored"


Action = StartSensing | EmitPacket | RunLayers | EnterDeepSleep | ScheduleWake | TaskDone


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class NodeParams:
    mode: Mode = Mode.ALGORITHM
    sensor: str = "Ultrasonic"
    t_sense_min: float = 3.0
    t_sense_max: float = 30.0
    safety_margin: float = 0.10
    handover_s: float = 0.2
    max_hops: int = 5
    sleep_power_mw: float = 0.0
    desync: DesyncParams = DesyncParams()
    offload: OffloadParams = OffloadParams()
    offload_reference: str = "mixed"


@dataclass
class NodeContext:
    """Read-only data every node consults."""

    profile: HardwareProfile
    battery: BatteryModel
    split_map: SplitMap
    params: NodeParams
    positions: Sequence[tuple[float, float]]
    radius: float

    def __post_init__(self):
        p = self.profile
        self.sense_power = p.sensor(self.params.sensor).avg_power_mw * 1e-3
        self.idle_power = p.idle_power_mw * 1e-3
        self.sleep_power = self.params.sleep_power_mw * 1e-3
        self.reserve = reserve_energy(p, self.params.safety_margin)
        self.vanilla_threshold = vanilla_wake_threshold(p, self.params.sensor)
        self.floor = self.battery.lower_threshold * self.battery.capacity_j
        self.beacon_energy = energy_of(p, TransmitBeacon())
        # waking from deep sleep must leave the recovery level intact after the beacon
        self.recovery_soc = self.battery.recovery_threshold * self.battery.capacity_j + self.beacon_energy


def reserve_energy(profile: HardwareProfile, safety_margin: float = 0.10) -> float:
    """Charge held back for one layer-0 inference plus sending its output."""
    return (energy_of(profile, Infer(0)) + energy_of(profile, Transmit(0))) * (1 + safety_margin)


def plan_sensing(store: EnergyStore, profile: HardwareProfile, battery: BatteryModel,
                 params: NodeParams = NodeParams()) -> float:
    """Longest sensing window the charge allows, in seconds."""
    e_reserve = reserve_energy(profile, params.safety_margin)
    p_sense = profile.sensor(params.sensor).avg_power_mw * 1e-3
    if store.soc < e_reserve + p_sense * params.t_sense_min:
        return 0.0
    return min(max((store.soc - e_reserve) / p_sense, 0.0), params.t_sense_max)


def vanilla_wake_threshold(profile: HardwareProfile, sensor: str = "Ultrasonic") -> float:
    """One profiled 3 s sensing window, one layer-0 inference and its frame."""
    return (profile.sensor(sensor).window_energy_uj * 1e-6 + energy_of(profile, Infer(0))
            + energy_of(profile, Transmit(0)))


# -- node state ------------------------------------------------------------

@dataclass
class NodeState:
    id: int
    position: tuple[float, float]
    env: EnvClass
    store: EnergyStore
    mode: Mode
    rng: np.random.Generator
    belief: BeliefMap
    phase: NodePhase = NodePhase.SLEEPING
    until_us: int | None = 0
    lifecycle: Phase = Phase.OPERATIONAL
    next_sleep_duration: float = 0.0
    overlap_flag: bool = False
    cycle_start_us: int = 0
    last_us: int = 0
    queue: deque = field(default_factory=deque)
    job: tuple | None = None
    next_task_seq: int = 0
    timer_token: int = 0
    sensing_cut: bool = False

    def voltage(self, battery: BatteryModel) -> float:
        return voltage_of(self.store, battery)


def phase_power(node: NodeState, ctx: NodeContext) -> float:
    ph = node.phase
    if ph is NodePhase.SENSING:
        return ctx.sense_power
    if ph is NodePhase.HANDOVER or ph is NodePhase.IDLE:
        return ctx.idle_power
    if ph is NodePhase.SLEEPING or ph is NodePhase.DEEP_SLEEP:
        return ctx.sleep_power
    # computing and transmitting are paid for up front
    return 0.0


def settle(node: NodeState, now_us: int, ctx: NodeContext) -> None:
    """Integrate harvest and phase power up to ``now_us``."""
    dt_us = now_us - node.last_us
    if dt_us < 0:
        raise RuntimeError(f"node {node.id}: time went backwards ({node.last_us} -> {now_us})")
    if dt_us:
        dt = dt_us / US
        node.last_us = now_us
        exchange(node.store, node.env.harvest_w * dt, phase_power(node, ctx) * dt)


def _set(node: NodeState, phase: NodePhase, until_us: int | None) -> None:
    node.phase = phase
    node.until_us = until_us
    node.timer_token += 1


def _wake_when(node: NodeState, now_us: int, target_soc: float, ctx: NodeContext) -> int | None:
    """Time at which resting harvest brings soc up to ``target_soc``."""
    net = node.env.harvest_w - ctx.sleep_power
    gap = target_soc - node.store.soc
    if gap <= 0:
        return now_us
    if net <= 0:
        return None
    return now_us + math.ceil(gap / net * US)


def _time_to_floor(node: NodeState, floor: float, power: float) -> float:
    net = power - node.env.harvest_w
    if net <= 0:
        return math.inf
    return max(node.store.soc - floor, 0.0) / net


def _new_task(node: NodeState, now_us: int, ctx: NodeContext) -> Task:
    seq = node.next_task_seq
    node.next_task_seq += 1
    return Task(task_id=node.id * 1_000_000 + seq, origin=node.id, layers_done=0,
                payload_bytes=ctx.profile.frames.raw_bytes, created_at_us=now_us)


def _deep_sleep(node: NodeState, now_us: int, ctx: NodeContext, extra: Sequence[Task] = ()) -> list[Action]:
    acts: list[Action] = []
    aborted = list(extra) + list(node.queue)
    node.queue.clear()
    if node.job is not None:
        aborted.append(node.job[0])
        node.job = None
    for t in aborted:
        acts.append(TaskDone(t, "dropped"))
    node.lifecycle = Phase.DEEP_SLEEP
    if node.mode is Mode.VANILLA:
        target = ctx.vanilla_threshold
    else:
        target = ctx.recovery_soc
    wake = _wake_when(node, now_us, target, ctx)
    if wake is not None and wake <= now_us:
        wake = now_us + 1
    _set(node, NodePhase.DEEP_SLEEP, wake)
    acts.append(EnterDeepSleep(len(aborted)))
    acts.append(ScheduleWake(wake))
    return acts


# -- entry point -----------------------------------------------------------

def step(node: NodeState, now_us: int, inbox: Sequence[Packet], ctx: NodeContext) -> list[Action]:
    try:
        settle(node, now_us, ctx)
        if inbox:
            acts: list[Action] = []
            for pkt in inbox:
                acts.extend(_receive(node, now_us, pkt, ctx))
            return acts
        if node.mode is Mode.VANILLA:
            return _vanilla_timer(node, now_us, ctx)
        return _algorithm_timer(node, now_us, ctx)
    except Depleted:
        return _deep_sleep(node, now_us, ctx)


def _receive(node: NodeState, now_us: int, pkt: Packet, ctx: NodeContext) -> list[Action]:
    if pkt.sender == node.id:
        return []
    v_i = node.voltage(ctx.battery)
    coord.update_belief(node.belief, pkt.sender, pkt.sender_voltage, v_i, now_us / US)
    if node.phase is NodePhase.SENSING:
        node.overlap_flag = True
    if pkt.kind is not PacketKind.TASK or pkt.target != node.id:
        return []
    task = Task(task_id=pkt.task_id, origin=pkt.origin, layers_done=pkt.layers_done,
                payload_bytes=pkt.payload_bytes, created_at_us=pkt.created_at_us,
                hop_count=pkt.hop_count, sender=pkt.sender, sender_voltage=pkt.sender_voltage)
    if node.mode is Mode.VANILLA:
        return [TaskDone(task, "ignored")]
    node.queue.append(task)
    return []


# -- vanilla ---------------------------------------------------------------

def _vanilla_timer(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    ph = node.phase
    if ph is NodePhase.SLEEPING or ph is NodePhase.DEEP_SLEEP:
        if node.store.soc < ctx.vanilla_threshold:
            wake = _wake_when(node, now_us, ctx.vanilla_threshold, ctx)
            _set(node, ph, wake)
            return [ScheduleWake(wake)]
        node.lifecycle = Phase.OPERATIONAL
        # sense until only the layer-0 inference and its frame are left
        secs = _time_to_floor(node, ctx.reserve, ctx.sense_power)
        dur = max(math.floor(secs * US), 1)
        node.cycle_start_us = now_us
        _set(node, NodePhase.SENSING, now_us + dur)
        return [StartSensing(dur)]
    if ph is NodePhase.SENSING:
        task = _new_task(node, now_us, ctx)
        drain(node.store, energy_of(ctx.profile, Infer(0)))
        node.job = (task, 1, None, False)
        _set(node, NodePhase.COMPUTING, now_us + round(duration_of(ctx.profile, Infer(0)) * US))
        return [RunLayers(task, 1)]
    if ph is NodePhase.COMPUTING:
        task, _, _, _ = node.job
        node.job = None
        pkt = make_packet(ctx.profile, PacketKind.TASK, node.id, node.voltage(ctx.battery), now_us,
                          layers_done=1, origin=task.origin, task_id=task.task_id,
                          created_at_us=task.created_at_us, hop_count=task.hop_count + 1)
        drain(node.store, pkt.energy)
        _set(node, NodePhase.TRANSMITTING, now_us + pkt.airtime_us)
        task.layers_done = 1
        return [EmitPacket(pkt), TaskDone(task, "forwarded")]
    if ph is NodePhase.TRANSMITTING:
        return _deep_sleep(node, now_us, ctx)
    raise RuntimeError(f"vanilla node {node.id}: unexpected timer in {ph}")


# -- algorithm -------------------------------------------------------------

def _algorithm_timer(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    ph = node.phase
    if ph is NodePhase.SLEEPING or ph is NodePhase.DEEP_SLEEP:
        return _algorithm_wake(node, now_us, ctx)
    if ph is NodePhase.SENSING:
        if node.sensing_cut:
            return _deep_sleep(node, now_us, ctx)
        node.queue.appendleft(_new_task(node, now_us, ctx))
        _set(node, NodePhase.HANDOVER, now_us + round(ctx.params.handover_s * US))
        return []
    if ph is NodePhase.COMPUTING:
        return _finish_job(node, now_us, ctx)
    if ph is NodePhase.HANDOVER or ph is NodePhase.TRANSMITTING or ph is NodePhase.IDLE:
        return _next_task(node, now_us, ctx)
    raise RuntimeError(f"node {node.id}: unexpected timer in {ph}")


def _algorithm_wake(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    frac = node.store.fraction
    if node.lifecycle is Phase.DEEP_SLEEP:
        frac = (node.store.soc - ctx.beacon_energy) / ctx.battery.capacity_j
    node.lifecycle = lifecycle_gate(frac, node.lifecycle, ctx.battery)
    if node.lifecycle is Phase.DEEP_SLEEP:
        return _deep_sleep(node, now_us, ctx)
    t_sense = plan_sensing(node.store, ctx.profile, ctx.battery, ctx.params)
    if t_sense <= 0:
        node.next_sleep_duration = ctx.params.desync.t_base
        wake = now_us + round(node.next_sleep_duration * US)
        _set(node, NodePhase.SLEEPING, wake)
        return [ScheduleWake(wake)]
    node.overlap_flag = False
    node.cycle_start_us = now_us
    beacon = make_packet(ctx.profile, PacketKind.BEACON, node.id, node.voltage(ctx.battery), now_us)
    drain(node.store, beacon.energy)
    if node.store.fraction < ctx.battery.lower_threshold:
        return _deep_sleep(node, now_us, ctx)
    # cut the window short at the brownout floor
    to_floor = _time_to_floor(node, ctx.floor, ctx.sense_power)
    node.sensing_cut = to_floor < t_sense
    dur = math.floor(to_floor * US) if node.sensing_cut else round(t_sense * US)
    if dur <= 0:
        return _deep_sleep(node, now_us, ctx)
    _set(node, NodePhase.SENSING, now_us + dur)
    return [EmitPacket(beacon), StartSensing(dur)]


def _go_to_sleep(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    node.next_sleep_duration = coord.next_sleep(ctx.params.desync, node.overlap_flag, node.rng)
    wake = now_us + round(node.next_sleep_duration * US)
    _set(node, NodePhase.SLEEPING, wake)
    return [ScheduleWake(wake)]


def _next_task(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    acts: list[Action] = []
    while node.queue:
        task = node.queue.popleft()
        plan = _plan_task(node, now_us, task, ctx)
        if plan is None:
            acts.append(TaskDone(task, "dropped"))
            continue
        count, target = plan
        if count == 0:
            return acts + _send_task(node, now_us, task, target, ctx)
        e = sum(energy_of(ctx.profile, Infer(k)) for k in range(task.layers_done, task.layers_done + count))
        try:
            drain(node.store, e)
        except Depleted:
            return acts + _deep_sleep(node, now_us, ctx, extra=[task])
        if node.store.fraction < ctx.battery.lower_threshold:
            return acts + _deep_sleep(node, now_us, ctx, extra=[task])
        latency = sum(ctx.profile.layers[k].latency_ms for k in range(task.layers_done, task.layers_done + count))
        node.job = (task, count, target, task.layers_done + count >= ctx.profile.n_layers)
        _set(node, NodePhase.COMPUTING, now_us + round(latency * 1000))
        acts.append(RunLayers(task, count))
        return acts
    return acts + _go_to_sleep(node, now_us, ctx)


def _plan_task(node: NodeState, now_us: int, task: Task, ctx: NodeContext) -> tuple[int, int | None] | None:
    """Decide (layers to run here, node to hand the rest to) or None to drop."""
    n_layers = ctx.profile.n_layers
    remaining = n_layers - task.layers_done
    sm = ctx.split_map
    now = now_us / US
    v_i = node.voltage(ctx.battery)
    target = None
    if task.hop_count < ctx.params.max_hops:
        exclude = {task.origin, task.sender} - {None}
        target = coord.pick_offload_target(node.belief, v_i, now, node.position, ctx.positions,
                                           ctx.radius, exclude, heard_since=node.cycle_start_us / US)
    if task.sender is not None:
        # a handed-over task: weigh ourselves against whoever sent it
        if ctx.params.offload_reference == "predicted" and task.sender in node.belief:
            v_ref = node.belief.predict(task.sender, v_i, now)
        else:
            v_ref = task.sender_voltage
        count = coord.decide_layers(v_i, v_ref, sm, ctx.params.offload, start=task.layers_done)
    elif target is not None:
        # our own task: weigh ourselves against the chosen neighbour
        if ctx.params.offload_reference == "packet":
            v_ref = node.belief.entries[target].last_voltage
        else:
            v_ref = node.belief.predict(target, v_i, now)
        count = coord.decide_layers(v_i, v_ref, sm, ctx.params.offload, start=task.layers_done)
    else:
        count = remaining
    if count >= remaining or target is None:
        # nobody richer to hand to: finish here if the charge allows
        if node.store.soc - sm.segment_energy(task.layers_done, remaining) >= ctx.floor:
            return remaining, None
        if target is None:
            return None
        count = 0
    return count, target


def _finish_job(node: NodeState, now_us: int, ctx: NodeContext) -> list[Action]:
    task, count, target, final = node.job
    node.job = None
    task.layers_done += count
    if task.layers_done < ctx.profile.n_layers:
        task.payload_bytes = ctx.profile.layers[task.layers_done - 1].output_bytes
    if final:
        return _send_result(node, now_us, task, ctx)
    return _send_task(node, now_us, task, target, ctx)


def _send_result(node: NodeState, now_us: int, task: Task, ctx: NodeContext) -> list[Action]:
    pkt = make_packet(ctx.profile, PacketKind.RESULT, node.id, node.voltage(ctx.battery), now_us,
                      layers_done=task.layers_done, origin=task.origin, task_id=task.task_id,
                      created_at_us=task.created_at_us, hop_count=task.hop_count)
    try:
        drain(node.store, pkt.energy)
    except Depleted:
        return _deep_sleep(node, now_us, ctx, extra=[task])
    _set(node, NodePhase.TRANSMITTING, now_us + pkt.airtime_us)
    return [EmitPacket(pkt), TaskDone(task, "completed")]


def _send_task(node: NodeState, now_us: int, task: Task, target: int, ctx: NodeContext) -> list[Action]:
    pkt = make_packet(ctx.profile, PacketKind.TASK, node.id, node.voltage(ctx.battery), now_us,
                      layers_done=task.layers_done, target=target, origin=task.origin,
                      task_id=task.task_id, created_at_us=task.created_at_us,
                      hop_count=task.hop_count + 1)
    try:
        drain(node.store, pkt.energy)
    except Depleted:
        return _deep_sleep(node, now_us, ctx, extra=[task])
    _set(node, NodePhase.TRANSMITTING, now_us + pkt.airtime_us)
    return [EmitPacket(pkt), TaskDone(task, "offloaded")]
