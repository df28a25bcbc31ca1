import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from harvestnet.coord import (
    BeliefEntry, BeliefMap, DesyncParams, OffloadParams, UnknownNeighbor, decide_layers, next_sleep,
    pick_offload_target, predict_voltage, update_belief,
)

volts = st.floats(3.0, 4.2)


def test_predict_examples():
    e = BeliefEntry(3.6, 0.0, 3.5)
    assert predict_voltage(e, 3.5, 10.0) == pytest.approx(3.6)
    assert predict_voltage(e, 3.7, 10.0) == pytest.approx(3.8)


def test_predict_clamped_and_unknown():
    b = BeliefMap()
    update_belief(b, 7, 4.1, 3.0, 0.0)
    assert b.predict(7, 3.5, 1.0) == 4.2
    with pytest.raises(UnknownNeighbor):
        b.predict(8, 3.5, 1.0)


@given(volts, volts, volts, st.floats(-0.5, 0.5))
def test_predict_shift_invariant(vj, vi_then, vi_now, c):
    e = BeliefEntry(vj, 0.0, vi_then)
    e2 = BeliefEntry(vj, 0.0, vi_then + c)
    assert predict_voltage(e, vi_now, 1.0) == pytest.approx(predict_voltage(e2, vi_now + c, 1.0), abs=1e-12)


def test_update_first_packet():
    b = BeliefMap()
    update_belief(b, 3, 3.7, 3.5, 12.0)
    e = b.entries[3]
    assert (e.last_voltage, e.last_time, e.own_voltage_at_last, e.delta_offset) == (3.7, 12.0, 3.5, 0.0)


def test_update_ewma():
    b = BeliefMap(beta=0.2)
    update_belief(b, 3, 3.7, 3.5, 0.0)
    update_belief(b, 3, 3.8, 3.5, 5.0)  # predicted 3.7
    assert b.entries[3].delta_offset == pytest.approx(0.02)


def test_ewma_converges_to_zero():
    b = BeliefMap()
    update_belief(b, 1, 3.7, 3.5, 0.0)
    b.entries[1].delta_offset = 0.1
    for k in range(1, 100):
        update_belief(b, 1, 3.7, 3.5, float(k))
    assert abs(b.entries[1].delta_offset) < 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_lockstep_prediction_exact(seed):
    errs = oracles.lockstep_prediction_errors(seed)
    assert errs and max(errs) < 1e-9


def test_next_sleep_no_overlap_is_exact_and_consumes_nothing():
    p = DesyncParams(60.0, 1.0, 10.0)
    g = np.random.default_rng(5)
    before = g.bit_generator.state
    assert next_sleep(p, False, g) == 60.0
    assert g.bit_generator.state == before


def test_next_sleep_overlap_range_and_mean():
    p = DesyncParams(60.0, 1.0, 10.0)
    g = np.random.default_rng(5)
    draws = np.array([next_sleep(p, True, g) for _ in range(10_000)])
    assert draws.min() > 61.0 and draws.max() < 70.0
    assert draws.mean() == pytest.approx(60 + 5.5, rel=0.02)


def test_desync_validation():
    with pytest.raises(ValueError):
        DesyncParams(60.0, 10.0, 1.0)
    with pytest.raises(ValueError):
        DesyncParams(0.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        OffloadParams(-0.1)


def test_decide_full_local(split_map):
    assert decide_layers(4.2, 3.0, split_map, OffloadParams()) == 5


def test_decide_strict_boundary(split_map):
    for L in range(1, 6):
        v_i = 4.1
        v_j = v_i - split_map.v_req[L]  # equality with alpha = 0
        assert v_i - split_map.v_req[L] == v_j + 0.0
        assert decide_layers(v_i, v_j, split_map, OffloadParams(0.0)) == L - 1
        assert decide_layers(v_i, v_j - 1e-9, split_map, OffloadParams(0.0)) == L


def test_decide_matches_brute_force(split_map):
    g = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        v_i, v_j = g.uniform(3.0, 4.2, 2)
        alpha = g.uniform(0.0, 0.1)
        start = int(g.integers(0, 5))
        if decide_layers(v_i, v_j, split_map, OffloadParams(alpha), start) != \
                oracles.brute_force_layers(v_i, v_j, alpha, start):
            mismatches += 1
    assert mismatches == 0


@settings(max_examples=200)
@given(volts, volts, volts, st.floats(0, 0.1), st.floats(0, 0.1))
def test_decide_monotone(v_i, v_i2, v_j, a1, a2):
    from harvestnet.energy import BatteryModel
    from harvestnet.profiles import build_split_map, load_profile
    sm = build_split_map(load_profile(), BatteryModel())
    lo, hi = sorted((v_i, v_i2))
    assert decide_layers(lo, v_j, sm, OffloadParams(a1)) <= decide_layers(hi, v_j, sm, OffloadParams(a1))
    assert decide_layers(hi, v_j, sm, OffloadParams(max(a1, a2))) <= decide_layers(hi, v_j, sm, OffloadParams(min(a1, a2)))
    assert decide_layers(hi, hi, sm, OffloadParams(a1)) <= decide_layers(hi, lo, sm, OffloadParams(a1))


def _belief(vals, own=3.4):
    b = BeliefMap()
    for j, v in vals.items():
        update_belief(b, j, v, own, 0.0)
    return b


POS = {0: (0, 0), 1: (20, 0), 2: (10, 17.32), 3: (-20, 0), 9: (100, 100)}


def test_pick_argmax():
    b = _belief({1: 3.2, 2: 3.9, 3: 3.7})
    assert pick_offload_target(b, 3.4, 1.0, POS[0], POS, 20.0) == 2


def test_pick_none_when_all_poorer():
    b = _belief({1: 3.2, 2: 3.3})
    assert pick_offload_target(b, 3.4, 1.0, POS[0], POS, 20.0) is None


def test_pick_tie_lowest_id():
    b = _belief({3: 3.9, 1: 3.9})
    assert pick_offload_target(b, 3.4, 1.0, POS[0], POS, 20.0) == 1


def test_pick_filters():
    b = _belief({1: 3.9, 9: 4.1, 2: 3.8})
    assert pick_offload_target(b, 3.4, 1.0, POS[0], POS, 20.0) == 1
    assert pick_offload_target(b, 3.4, 1.0, POS[0], POS, 20.0, exclude={1}) == 2
    update_belief(b, 2, 3.8, 3.4, 5.0)
    assert pick_offload_target(b, 3.4, 6.0, POS[0], POS, 20.0, heard_since=4.0) == 2
