import pytest
from hypothesis import given, strategies as st

from harvestnet.energy import (
    SHADY, SUNNY, BatteryModel, Depleted, EnergyStore, Phase, drain, exchange, harvest,
    lifecycle_gate, time_to_reach, voltage_of,
)
from harvestnet.profiles import full_pass_energy, load_profile


def test_capacity(battery):
    assert battery.capacity_j == pytest.approx(594.0)


def test_invalid_battery():
    with pytest.raises(ValueError):
        BatteryModel(lower_threshold=0.3, recovery_threshold=0.2)
    with pytest.raises(ValueError):
        BatteryModel(v_min=4.2, v_max=3.0)


def test_harvest_sunny_10s():
    s = EnergyStore(594.0, 100.0)
    harvest(s, SUNNY, 10.0)
    assert s.soc - 100.0 == pytest.approx(3e-3, abs=1e-12)


def test_harvest_zero_dt():
    s = EnergyStore(594.0, 100.0)
    harvest(s, SHADY, 0.0)
    assert s.soc == 100.0 and s.harvested == 0.0


def test_harvest_when_full_is_wasted():
    s = EnergyStore(594.0, 594.0)
    harvest(s, SUNNY, 100.0)
    assert s.soc == 594.0
    assert s.wasted == pytest.approx(0.03)


def test_drain_full_pass():
    s = EnergyStore(594.0, 10.0)
    drain(s, full_pass_energy(load_profile()))
    assert s.soc == pytest.approx(3.93273, abs=1e-9)


def test_drain_zero_and_depleted():
    s = EnergyStore(594.0, 1.0)
    drain(s, 0.0)
    assert s.soc == 1.0
    with pytest.raises(Depleted) as exc:
        drain(s, 2.0)
    assert exc.value.shortfall == pytest.approx(1.0)
    assert s.soc == 0.0


def test_voltage_examples(battery):
    assert voltage_of(EnergyStore(594.0, 0.0), battery) == 3.0
    assert voltage_of(EnergyStore(594.0, 594.0), battery) == pytest.approx(4.2)
    assert voltage_of(EnergyStore(594.0, 297.0), battery) == pytest.approx(3.6)


@given(st.floats(0, 594), st.floats(0, 594))
def test_voltage_monotone_and_invertible(a, b):
    bat = BatteryModel()
    va = voltage_of(EnergyStore(594.0, a), bat)
    vb = voltage_of(EnergyStore(594.0, b), bat)
    if b - a > 1e-9:  # below this the proxy is lost to float resolution
        assert va < vb
    assert (va <= vb) == (a <= b) or abs(va - vb) < 1e-15
    assert bat.soc_from_voltage(va) == pytest.approx(a, abs=1e-9)
    assert voltage_of(EnergyStore(594.0, bat.soc_from_voltage(va)), bat) == pytest.approx(va, abs=1e-12)


def test_gate_examples(battery):
    assert lifecycle_gate(0.009, Phase.OPERATIONAL, battery) is Phase.DEEP_SLEEP
    assert lifecycle_gate(0.15, Phase.DEEP_SLEEP, battery) is Phase.DEEP_SLEEP
    assert lifecycle_gate(0.20, Phase.DEEP_SLEEP, battery) is Phase.OPERATIONAL


@given(st.lists(st.floats(0, 0.1999), max_size=50))
def test_no_wake_below_recovery(fracs):
    bat = BatteryModel()
    ph = Phase.DEEP_SLEEP
    for f in fracs:
        ph = lifecycle_gate(f, ph, bat)
        assert ph is Phase.DEEP_SLEEP


@given(st.lists(st.floats(0.01, 1.0), max_size=50))
def test_no_sleep_above_floor(fracs):
    bat = BatteryModel()
    ph = Phase.OPERATIONAL
    for f in fracs:
        ph = lifecycle_gate(f, ph, bat)
        assert ph is Phase.OPERATIONAL


_ops = st.lists(st.tuples(st.sampled_from(["h", "d", "x"]), st.floats(0, 300), st.floats(0, 300)), max_size=60)


@given(st.floats(0, 594), _ops)
def test_conservation_and_bounds(start, ops):
    s = EnergyStore(594.0, start)
    for kind, a, b in ops:
        try:
            if kind == "h":
                harvest(s, SUNNY, a * 1000)
            elif kind == "d":
                drain(s, a)
            else:
                exchange(s, a, b)
        except Depleted:
            pass
        assert 0.0 <= s.soc <= s.capacity
        assert abs(s.balance_error()) < 1e-9
        assert s.soc - s.initial == pytest.approx(s.harvested_applied - s.consumed, abs=1e-9)


def test_exchange_nets_before_clamp():
    s = EnergyStore(594.0, 594.0)
    exchange(s, 1.0, 2.0)
    assert s.wasted == 0.0
    assert s.soc == pytest.approx(593.0)


def test_time_to_reach():
    s = EnergyStore(594.0, 100.0)
    assert time_to_reach(s, 103.0, 300e-6) == pytest.approx(10_000.0)
    assert time_to_reach(s, 100.0, 0.0) == 0.0
    assert time_to_reach(s, 50.0, 1.0) == float("inf")
