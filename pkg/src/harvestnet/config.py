"""Scenario configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Every key must be one of the
fields of :class:`ScenarioConfig`; anything else is an error.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

BUNDLED = {"paper-default": "paper-default.cfg"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    # deployment
    nodes: int = 100
    spacing_m: float = 20.0
    radius_m: float = 20.0
    sunny_ratio: float = 0.5
    raster_m: float = 1.0
    # events
    event_rate_per_hour: float = 50.0
    event_mode: str = "poisson"
    event_duration_s: float = 5.0
    min_capture_overlap_s: float = 0.5
    # run
    mode: str = "algorithm"
    seed: int = 42
    duration_s: float = 10_000.0
    metrics_sample_s: float = 1.0
    out_dir: str = "out"
    export_packets: bool = False
    # battery and harvesting
    capacity_mAh: float = 50.0
    nominal_v: float = 3.3
    v_min: float = 3.0
    v_max: float = 4.2
    lower_threshold: float = 0.01
    recovery_threshold: float = 0.20
    init_soc_min: float = 0.3
    init_soc_max: float = 1.0
    harvest_sunny_uw: float = 300.0
    harvest_shady_uw: float = 50.0
    # hardware profile and frames
    profile: str = "default"
    sensor: str = "Ultrasonic"
    raw_payload_bytes: int = 400
    beacon_bytes: int = 16
    beacon_airtime_ms: float = 5.0
    result_bytes: int = 8
    result_airtime_ms: float = 5.0
    # node cycle
    t_sense_min_s: float = 3.0
    t_sense_max_s: float = 30.0
    safety_margin: float = 0.10
    handover_s: float = 0.2
    max_hops: int = 5
    sleep_power_mw: float = 0.0
    # coordination
    t_base_s: float = 60.0
    backoff_min_s: float = 1.0
    backoff_max_s: float = 10.0
    alpha_v: float = 0.02
    ewma_beta: float = 0.2
    offload_reference: str = "mixed"
    # radio
    loss_prob: float = 0.0

    def __post_init__(self):
        self.validate()

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        def need(cond: bool, msg: str):
            if not cond:
                raise ConfigError(msg)

        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                need(math.isfinite(v), f"{f.name} must be finite")
        need(self.nodes >= 1, "nodes must be >= 1")
        need(self.spacing_m > 0, "spacing_m must be > 0")
        need(self.radius_m > 0, "radius_m must be > 0")
        need(0 <= self.sunny_ratio <= 1, "sunny_ratio must lie in [0, 1]")
        need(self.raster_m > 0, "raster_m must be > 0")
        need(self.event_rate_per_hour >= 0, "event_rate_per_hour must be >= 0")
        need(self.event_mode in ("poisson", "fixed"), "event_mode must be poisson or fixed")
        need(self.event_duration_s > 0, "event_duration_s must be > 0")
        need(self.min_capture_overlap_s >= 0, "min_capture_overlap_s must be >= 0")
        need(self.mode in ("vanilla", "algorithm"), "mode must be vanilla or algorithm")
        need(self.seed >= 0, "seed must be >= 0")
        need(self.duration_s >= 0, "duration_s must be >= 0")
        need(self.metrics_sample_s > 0, "metrics_sample_s must be > 0")
        need(self.capacity_mAh > 0 and self.nominal_v > 0, "capacity_mAh and nominal_v must be > 0")
        need(self.v_min < self.v_max, "v_min must be < v_max")
        need(0 < self.lower_threshold < self.recovery_threshold < 1,
             "need 0 < lower_threshold < recovery_threshold < 1")
        need(0 <= self.init_soc_min <= self.init_soc_max <= 1, "need 0 <= init_soc_min <= init_soc_max <= 1")
        need(self.harvest_sunny_uw > 0 and self.harvest_shady_uw > 0, "harvest rates must be > 0")
        need(self.raw_payload_bytes > 0 and self.beacon_bytes > 0 and self.result_bytes > 0,
             "frame sizes must be > 0")
        need(self.beacon_airtime_ms > 0 and self.result_airtime_ms > 0, "frame airtimes must be > 0")
        need(0 < self.t_sense_min_s <= self.t_sense_max_s, "need 0 < t_sense_min_s <= t_sense_max_s")
        need(self.safety_margin >= 0, "safety_margin must be >= 0")
        need(self.handover_s >= 0, "handover_s must be >= 0")
        need(self.max_hops >= 0, "max_hops must be >= 0")
        need(self.sleep_power_mw >= 0, "sleep_power_mw must be >= 0")
        need(self.t_base_s > 0, "t_base_s must be > 0")
        need(0 <= self.backoff_min_s < self.backoff_max_s, "need 0 <= backoff_min_s < backoff_max_s")
        need(self.alpha_v >= 0, "alpha_v must be >= 0")
        need(0 < self.ewma_beta <= 1, "ewma_beta must lie in (0, 1]")
        need(self.offload_reference in ("mixed", "packet", "predicted"),
             "offload_reference must be mixed, packet or predicted")
        need(0 <= self.loss_prob <= 1, "loss_prob must lie in [0, 1]")


_FIELDS = {f.name: f for f in fields(ScenarioConfig)}


def _coerce(key: str, raw: str, lineno: int | None = None) -> Any:
    where = f"line {lineno}: " if lineno else ""
    default = getattr(ScenarioConfig, key)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw.replace("_", ""))
        if isinstance(default, float):
            return float(raw.replace("_", ""))
    except ValueError:
        raise ConfigError(f"{where}{key}: cannot parse {raw!r}") from None
    return raw


def parse_config(text: str, **overrides: Any) -> ScenarioConfig:
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, lineno)
    for key, v in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        if v is not None:
            values[key] = v
    return ScenarioConfig(**values)


def load_config(path_or_name: str | Path, **overrides: Any) -> ScenarioConfig:
    """Read a config file, or a bundled one by name (``paper-default``)."""
    name = str(path_or_name)
    if name in BUNDLED:
        text = resources.files("harvestnet.data").joinpath(BUNDLED[name]).read_text()
    else:
        try:
            text = Path(name).read_text()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {name}") from None
    return parse_config(text, **overrides)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
