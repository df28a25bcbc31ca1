"""Discrete-event loop, world construction and per-run metrics."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from harvestnet import raster, rng
from harvestnet.config import ScenarioConfig
from harvestnet.coord import BeliefMap, DesyncParams, OffloadParams
from harvestnet.energy import BatteryModel, Depleted, EnergyStore, EnvClass
from harvestnet.net import US, Packet, PacketKind, neighbor_table
from harvestnet.node import (
    RECEIVE_CAPABLE, EmitPacket, EnterDeepSleep, Mode, NodeContext, NodeParams, NodePhase,
    NodeState, RunLayers, TaskDone, settle, step,
)
from harvestnet.profiles import FrameModel, HardwareProfile, build_split_map, load_profile
from harvestnet.world import (
    AcousticEvent, Position, Region, assign_env, build_hex_grid, event_captured, gen_events,
)

_TIMER = 0
_DELIVER = 1
_SENT_KEY = {
    PacketKind.BEACON: "beacons_sent",
    PacketKind.TASK: "task_frames_sent",
    PacketKind.RESULT: "result_frames_sent",
}


class InvariantBreach(RuntimeError):
    """The simulation reached a state its own rules forbid."""


@dataclass
class World:
    positions: list[Position]
    env: list[EnvClass]
    initial_soc: list[float]
    region: Region
    events: list[AcousticEvent]
    neighbors: list[tuple[int, ...]]


def battery_from(cfg: ScenarioConfig) -> BatteryModel:
    return BatteryModel(cfg.capacity_mAh, cfg.nominal_v, cfg.v_min, cfg.v_max,
                        cfg.lower_threshold, cfg.recovery_threshold)


def profile_from(cfg: ScenarioConfig) -> HardwareProfile:
    frames = FrameModel(cfg.beacon_bytes, cfg.beacon_airtime_ms, cfg.result_bytes,
                        cfg.result_airtime_ms, cfg.raw_payload_bytes)
    return load_profile(None if cfg.profile == "default" else cfg.profile, frames)


def node_params_from(cfg: ScenarioConfig) -> NodeParams:
    return NodeParams(
        mode=Mode(cfg.mode),
        sensor=cfg.sensor,
        t_sense_min=cfg.t_sense_min_s,
        t_sense_max=cfg.t_sense_max_s,
        safety_margin=cfg.safety_margin,
        handover_s=cfg.handover_s,
        max_hops=cfg.max_hops,
        sleep_power_mw=cfg.sleep_power_mw,
        desync=DesyncParams(cfg.t_base_s, cfg.backoff_min_s, cfg.backoff_max_s),
        offload=OffloadParams(cfg.alpha_v),
        offload_reference=cfg.offload_reference,
    )


def build_world(cfg: ScenarioConfig) -> World:
    """Everything that must be identical between the two modes of one seed."""
    positions = build_hex_grid(cfg.nodes, cfg.spacing_m)
    region = Region.around(positions, cfg.raster_m)
    sunny = EnvClass("sunny", cfg.harvest_sunny_uw)
    shady = EnvClass("shady", cfg.harvest_shady_uw)
    env = assign_env(positions, cfg.sunny_ratio, rng.stream(cfg.seed, "world/env"), sunny, shady)
    cap = battery_from(cfg).capacity_j
    draws = rng.stream(cfg.seed, "world/init-soc").uniform(cfg.init_soc_min, cfg.init_soc_max, cfg.nodes)
    events = gen_events(cfg.event_rate_per_hour, cfg.duration_s, region,
                        rng.stream(cfg.seed, "world/events"), cfg.event_duration_s,
                        fixed_count=cfg.event_mode == "fixed")
    return World(positions, env, [float(f) * cap for f in draws], region, events,
                 neighbor_table(positions, cfg.radius_m))


@dataclass
class Metrics:
    mode: str
    seed: int
    duration_s: float
    region: Region
    positions: list[Position]
    env: list[EnvClass]
    sample_t: np.ndarray
    coverage: np.ndarray
    events: list[AcousticEvent]
    nodes: list[dict[str, Any]]
    phase_log: list[list[tuple[float, str, float]]]
    sensing_intervals: list[list[tuple[float, float]]]
    counters: dict[str, int]
    audit_error: float
    hysteresis_violations: int
    packets: list[tuple] = field(default_factory=list)

    @property
    def mean_coverage(self) -> float:
        return float(self.coverage.mean()) if len(self.coverage) else 0.0

    @property
    def std_coverage(self) -> float:
        """Population standard deviation over the sampled time series."""
        return float(self.coverage.std()) if len(self.coverage) else 0.0

    @property
    def events_occurred(self) -> int:
        return len(self.events)

    @property
    def events_captured(self) -> int:
        return sum(e.captured_by is not None for e in self.events)

    @property
    def capture_rate(self) -> float:
        return self.events_captured / self.events_occurred if self.events else 0.0

    @property
    def wasted_harvest(self) -> float:
        return sum(n["wasted_j"] for n in self.nodes)


class Simulation:
    def __init__(self, cfg: ScenarioConfig, world: World | None = None,
                 profile: HardwareProfile | None = None):
        self.cfg = cfg
        self.world = world or build_world(cfg)
        self.profile = profile or profile_from(cfg)
        self.battery = battery_from(cfg)
        params = node_params_from(cfg)
        self.mode = params.mode
        self.ctx = NodeContext(self.profile, self.battery, build_split_map(self.profile, self.battery),
                               params, self.world.positions, cfg.radius_m)
        cap = self.battery.capacity_j
        self.nodes = [
            NodeState(
                id=i, position=p, env=self.world.env[i],
                store=EnergyStore(cap, self.world.initial_soc[i]),
                mode=self.mode, rng=rng.stream(cfg.seed, "node", i),
                belief=BeliefMap(cfg.v_min, cfg.v_max, cfg.ewma_beta),
            )
            for i, p in enumerate(self.world.positions)
        ]
        region = self.world.region
        self._cells = [region.disk_cells(p, cfg.radius_m) for p in self.world.positions]
        self._loss_rng = rng.stream(cfg.seed, "net/loss")

    def run(self) -> Metrics:
        cfg = self.cfg
        dur_us = round(cfg.duration_s * US)
        n = len(self.nodes)
        heap: list[tuple] = []
        seq = 0
        scheduled = [-1] * n
        counter = raster.CellCounter(self.world.region.n_cells)
        cov_t: list[int] = [0]
        cov_v: list[int] = [0]
        intervals: list[list[tuple[float, float]]] = [[] for _ in range(n)]
        open_since: list[int | None] = [None] * n
        phase_log: list[list[tuple[float, str, float]]] = [
            [(0.0, nd.phase.value, nd.store.soc)] for nd in self.nodes]
        awaiting_recovery = [False] * n
        violations = 0
        counters = dict.fromkeys(
            ("frames_sent", "frames_delivered", "beacons_sent", "task_frames_sent", "result_frames_sent",
             "tasks_created", "tasks_completed", "tasks_offloaded", "tasks_forwarded", "tasks_dropped",
             "tasks_lost", "tasks_ignored", "deep_sleeps", "sensing_windows", "layers_run"), 0)
        packets: list[tuple] = []
        record_packets = cfg.export_packets
        floor = self.ctx.floor
        mode_alg = self.mode is Mode.ALGORITHM
        positions = self.world.positions
        neighbors = self.world.neighbors
        loss = cfg.loss_prob

        for nd in self.nodes:
            heapq.heappush(heap, (0, seq, _TIMER, nd.id, nd.timer_token))
            scheduled[nd.id] = nd.timer_token
            seq += 1

        def apply(nd: NodeState, t: int, before: NodePhase, acts) -> None:
            nonlocal seq, violations
            i = nd.id
            if nd.phase is not before:
                if before is NodePhase.SENSING:
                    counter.remove(self._cells[i])
                    cov_t.append(t)
                    cov_v.append(counter.covered)
                    intervals[i].append((open_since[i] / US, t / US))
                    open_since[i] = None
                if nd.phase is NodePhase.SENSING:
                    if mode_alg and nd.store.soc < floor - 1e-9:
                        raise InvariantBreach(f"node {i} began sensing below the brownout floor at t={t / US}")
                    if awaiting_recovery[i]:
                        if nd.store.fraction < cfg.recovery_threshold:
                            violations += 1
                        awaiting_recovery[i] = False
                    counter.add(self._cells[i])
                    cov_t.append(t)
                    cov_v.append(counter.covered)
                    open_since[i] = t
                    counters["sensing_windows"] += 1
                phase_log[i].append((t / US, nd.phase.value, nd.store.soc))
            for a in acts:
                if isinstance(a, EmitPacket):
                    p = a.packet
                    counters["frames_sent"] += 1
                    counters[_SENT_KEY[p.kind]] += 1
                    heapq.heappush(heap, (p.arrives_at_us, seq, _DELIVER, p, None))
                    seq += 1
                elif isinstance(a, TaskDone):
                    counters[f"tasks_{a.how}"] += 1
                elif isinstance(a, EnterDeepSleep):
                    counters["deep_sleeps"] += 1
                    if mode_alg:
                        awaiting_recovery[i] = True
                elif isinstance(a, RunLayers):
                    counters["layers_run"] += a.count
            if nd.timer_token != scheduled[i] and nd.until_us is not None:
                if nd.until_us < t:
                    raise InvariantBreach(f"node {i} scheduled a timer in the past ({nd.until_us} < {t})")
                heapq.heappush(heap, (nd.until_us, seq, _TIMER, i, nd.timer_token))
                scheduled[i] = nd.timer_token
                seq += 1

        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            if t > dur_us:
                break
            if kind == _TIMER:
                nd = self.nodes[a]
                if b != nd.timer_token:
                    continue
                before = nd.phase
                acts = step(nd, t, (), self.ctx)
                apply(nd, t, before, acts)
                continue
            pkt: Packet = a
            heard = []
            for r in neighbors[pkt.sender]:
                nd = self.nodes[r]
                if loss and self._loss_rng.random() < loss:
                    if pkt.target == r:
                        counters["tasks_lost"] += 1
                    continue
                if nd.phase not in RECEIVE_CAPABLE:
                    if pkt.target == r:
                        counters["tasks_lost"] += 1
                    continue
                before = nd.phase
                acts = step(nd, t, (pkt,), self.ctx)
                heard.append(r)
                counters["frames_delivered"] += 1
                apply(nd, t, before, acts)
            if record_packets:
                packets.append((pkt.sent_at, pkt.sender, pkt.kind.value, pkt.payload_bytes,
                                pkt.target, tuple(heard)))

        counters["tasks_created"] = sum(nd.next_task_seq for nd in self.nodes)
        # close the books at the horizon
        for nd in self.nodes:
            if nd.last_us < dur_us:
                try:
                    settle(nd, dur_us, self.ctx)
                except Depleted:
                    pass
            if open_since[nd.id] is not None:
                intervals[nd.id].append((open_since[nd.id] / US, dur_us / US))

        audit = sum(nd.store.initial + nd.store.harvested - nd.store.wasted - nd.store.consumed
                    for nd in self.nodes) - sum(nd.store.soc for nd in self.nodes)

        sample_us = round(cfg.metrics_sample_s * US)
        times = np.arange(0, dur_us, sample_us, dtype=np.int64)
        ct = np.asarray(cov_t, dtype=np.int64)
        cv = np.asarray(cov_v, dtype=np.float64)
        idx = np.searchsorted(ct, times, side="right") - 1
        coverage = cv[idx] / self.world.region.n_cells if len(times) else np.zeros(0)

        events = [AcousticEvent(e.time, e.position, e.duration) for e in self.world.events]
        self._capture(events, intervals)

        rows = []
        for nd in self.nodes:
            s = nd.store
            rows.append(dict(
                node_id=nd.id, x_m=nd.position[0], y_m=nd.position[1], env=nd.env.kind,
                initial_soc_j=s.initial, final_soc_j=s.soc, harvested_j=s.harvested,
                wasted_j=s.wasted, consumed_j=s.consumed,
                sensing_s=sum(b - a for a, b in intervals[nd.id]),
                sensing_windows=len(intervals[nd.id]),
                final_phase=nd.phase.value,
            ))
        return Metrics(
            mode=self.mode.value, seed=cfg.seed, duration_s=cfg.duration_s, region=self.world.region,
            positions=positions, env=self.world.env, sample_t=times / US, coverage=coverage,
            events=events, nodes=rows, phase_log=phase_log, sensing_intervals=intervals,
            counters=counters, audit_error=audit, hysteresis_violations=violations, packets=packets,
        )

    def _capture(self, events: list[AcousticEvent], intervals) -> None:
        if not events:
            return
        pos = np.array(self.world.positions, dtype=float)
        r = self.cfg.radius_m
        for ev in events:
            d = np.hypot(pos[:, 0] - ev.position.x, pos[:, 1] - ev.position.y)
            cand = np.nonzero(d <= r)[0].tolist()
            ev.captured_by = event_captured(ev, intervals, self.world.positions, r,
                                            self.cfg.min_capture_overlap_s, candidates=cand)


def run(cfg: ScenarioConfig, world: World | None = None) -> Metrics:
    return Simulation(cfg, world).run()
