from dataclasses import replace

import numpy as np
import pytest

from harvestnet.coord import BeliefMap
from harvestnet.energy import SHADY, SUNNY, EnergyStore, Phase
from harvestnet.net import US, PacketKind, make_packet
from harvestnet.node import (
    EmitPacket, EnterDeepSleep, Mode, NodeContext, NodeParams, NodePhase, NodeState, RunLayers,
    ScheduleWake, StartSensing, Task, TaskDone, plan_sensing, reserve_energy, step,
    vanilla_wake_threshold,
)
from harvestnet.profiles import SensorCost, build_split_map

POSITIONS = [(0.0, 0.0), (20.0, 0.0), (40.0, 0.0)]


def _ctx(profile, battery, mode=Mode.ALGORITHM, **kw):
    params = NodeParams(mode=mode, **kw)
    return NodeContext(profile, battery, build_split_map(profile, battery), params, POSITIONS, 20.0)


def _node(ctx, soc, i=0, env=SUNNY):
    return NodeState(id=i, position=POSITIONS[i], env=env, store=EnergyStore(ctx.battery.capacity_j, soc),
                     mode=ctx.params.mode, rng=np.random.default_rng(i), belief=BeliefMap())


def _run_timers(nd, ctx, until_phase, limit=50):
    """Fire the node's own timers until it reaches ``until_phase``."""
    acts = []
    for _ in range(limit):
        acts += step(nd, nd.until_us, (), ctx)
        if nd.phase is until_phase:
            return acts
    raise AssertionError(f"never reached {until_phase}, stuck in {nd.phase}")


def test_reserve(profile):
    assert reserve_energy(profile, 0.10) == pytest.approx((0.57777 + 0.024555) * 1.1)


def test_plan_sensing_examples(profile, battery):
    r = reserve_energy(profile)
    assert plan_sensing(EnergyStore(594.0, 594.0), profile, battery) == 30.0
    assert plan_sensing(EnergyStore(594.0, r), profile, battery) == 0.0
    assert plan_sensing(EnergyStore(594.0, r + 0.44966 * 3), profile, battery) == pytest.approx(3.0)
    assert plan_sensing(EnergyStore(594.0, r + 0.44966 * 2.9), profile, battery) == 0.0


def test_vanilla_threshold(profile):
    assert round(vanilla_wake_threshold(profile) * 1e6) == 1_951_295
    doubled = replace(profile, sensors=(SensorCost("Ultrasonic", 899.32, 2_697_940),))
    assert vanilla_wake_threshold(doubled) - vanilla_wake_threshold(profile) == pytest.approx(1.34897, abs=1e-9)


def test_vanilla_threshold_zeroed(profile):
    z = replace(
        profile,
        layers=tuple(replace(l, energy_uj=0.0) for l in profile.layers),
        tx=tuple(replace(t, energy_uj=0.0) for t in profile.tx),
        sensors=(SensorCost("Ultrasonic", 0.0, 0.0),),
    )
    assert vanilla_wake_threshold(z) == 0.0


def test_vanilla_below_threshold_waits(profile, battery):
    ctx = _ctx(profile, battery, Mode.VANILLA)
    nd = _node(ctx, ctx.vanilla_threshold - 0.01)
    acts = step(nd, 0, (), ctx)
    assert len(acts) == 1 and isinstance(acts[0], ScheduleWake)
    assert nd.phase is NodePhase.SLEEPING
    assert acts[0].at_us > 0


def test_vanilla_cycle_runs_one_layer(profile, battery):
    ctx = _ctx(profile, battery, Mode.VANILLA)
    nd = _node(ctx, 5.0, env=SHADY)
    acts = step(nd, 0, (), ctx)
    assert isinstance(acts[0], StartSensing)
    acts = _run_timers(nd, ctx, NodePhase.DEEP_SLEEP)
    runs = [a for a in acts if isinstance(a, RunLayers)]
    emits = [a.packet for a in acts if isinstance(a, EmitPacket)]
    assert [r.count for r in runs] == [1]
    assert len(emits) == 1 and emits[0].kind is PacketKind.TASK
    assert emits[0].layers_done == 1 and emits[0].payload_bytes == 400
    assert any(isinstance(a, EnterDeepSleep) for a in acts)
    # only the reserve's margin is left
    assert nd.store.soc == pytest.approx(ctx.reserve - 0.57777 - 0.024555, abs=1e-3)


def test_vanilla_ignores_tasks(profile, battery):
    ctx = _ctx(profile, battery, Mode.VANILLA)
    nd = _node(ctx, 100.0)
    step(nd, 0, (), ctx)
    pkt = make_packet(profile, PacketKind.TASK, 1, 3.9, 1000, layers_done=1, target=0, origin=1, task_id=7)
    acts = step(nd, pkt.arrives_at_us, (pkt,), ctx)
    assert [a.how for a in acts if isinstance(a, TaskDone)] == ["ignored"]


def test_beacon_in_sensing_sets_overlap_and_backs_off(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 300.0)
    acts = step(nd, 0, (), ctx)
    assert isinstance(acts[0], EmitPacket) and acts[0].packet.kind is PacketKind.BEACON
    assert nd.phase is NodePhase.SENSING and not nd.overlap_flag
    b = make_packet(profile, PacketKind.BEACON, 1, 3.9, 1000)
    step(nd, b.arrives_at_us, (b,), ctx)
    assert nd.overlap_flag
    _run_timers(nd, ctx, NodePhase.SLEEPING)
    d = ctx.params.desync
    assert d.t_base + d.t_min < nd.next_sleep_duration < d.t_base + d.t_max


def test_no_overlap_sleeps_t_base(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 300.0)
    step(nd, 0, (), ctx)
    _run_timers(nd, ctx, NodePhase.SLEEPING)
    assert nd.next_sleep_duration == ctx.params.desync.t_base


def test_low_charge_enters_deep_sleep_despite_task(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 0.005 * battery.capacity_j)
    nd.queue.append(Task(task_id=1, origin=1, layers_done=1, payload_bytes=400, created_at_us=0,
                         sender=1, sender_voltage=3.9))
    acts = step(nd, 0, (), ctx)
    assert any(isinstance(a, EnterDeepSleep) for a in acts)
    assert [a.how for a in acts if isinstance(a, TaskDone)] == ["dropped"]
    assert nd.phase is NodePhase.DEEP_SLEEP and nd.lifecycle is Phase.DEEP_SLEEP
    assert not nd.queue


def test_deep_sleep_waits_for_recovery(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 0.005 * battery.capacity_j)
    acts = step(nd, 0, (), ctx)
    wake = [a for a in acts if isinstance(a, ScheduleWake)][0].at_us
    need = ((0.2 - 0.005) * battery.capacity_j + ctx.beacon_energy) / SUNNY.harvest_w
    assert wake / US == pytest.approx(need, rel=1e-6)
    # an early timer does nothing but re-arm
    acts = step(nd, wake // 2, (), ctx)
    assert nd.phase is NodePhase.DEEP_SLEEP and not any(isinstance(a, (EmitPacket, StartSensing)) for a in acts)
    acts = step(nd, wake, (), ctx)
    assert nd.store.fraction >= 0.2 - 1e-9
    assert nd.phase is NodePhase.SENSING


def test_full_local_when_no_neighbour(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 400.0)
    step(nd, 0, (), ctx)
    acts = _run_timers(nd, ctx, NodePhase.SLEEPING)
    assert [r.count for r in acts if isinstance(r, RunLayers)] == [5]
    assert [a.how for a in acts if isinstance(a, TaskDone)] == ["completed"]
    res = [a.packet for a in acts if isinstance(a, EmitPacket)]
    assert res[0].kind is PacketKind.RESULT and res[0].payload_bytes == 8


def test_offloads_to_richer_neighbour(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 150.0)
    step(nd, 0, (), ctx)
    rich = make_packet(profile, PacketKind.BEACON, 1, 4.15, 1000)
    step(nd, rich.arrives_at_us, (rich,), ctx)
    acts = _run_timers(nd, ctx, NodePhase.SLEEPING)
    tasks = [a.packet for a in acts if isinstance(a, EmitPacket) and a.packet.kind is PacketKind.TASK]
    assert len(tasks) == 1 and tasks[0].target == 1
    runs = [a.count for a in acts if isinstance(a, RunLayers)]
    k = runs[0] if runs else 0
    assert tasks[0].layers_done == k
    want = 400 if k == 0 else profile.layers[k - 1].output_bytes
    assert tasks[0].payload_bytes == want


def test_emit_is_paid_for(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 200.0)
    before = nd.store.consumed
    acts = step(nd, 0, (), ctx)
    assert nd.store.consumed - before == pytest.approx(acts[0].packet.energy)


def test_received_task_processed(profile, battery):
    ctx = _ctx(profile, battery)
    nd = _node(ctx, 500.0)
    step(nd, 0, (), ctx)
    pkt = make_packet(profile, PacketKind.TASK, 1, 3.3, 1000, layers_done=2, target=0, origin=1,
                      task_id=9, hop_count=1)
    step(nd, pkt.arrives_at_us, (pkt,), ctx)
    assert len(nd.queue) == 1
    acts = _run_timers(nd, ctx, NodePhase.SLEEPING)
    done = [a for a in acts if isinstance(a, TaskDone)]
    assert {(a.task.task_id, a.how) for a in done} == {(0, "completed"), (9, "completed")}
    assert sorted(a.count for a in acts if isinstance(a, RunLayers)) == [3, 5]
