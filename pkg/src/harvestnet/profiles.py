"""Hardware power profiles and the offline maps built from them.

A profile file is a sectioned text file (``[idle]``, ``[layers]``, ``[tx]``,
``[sensors]``); each section holds one comma-separated table with a header
row. Units are mW, ms, uJ and bytes throughout the file; everything handed
out of this module is converted to SI (W, s, J).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from harvestnet.energy import BatteryModel

SENSOR_WINDOW_S = 3.0
DEFAULT_PROFILE = "esp32c3_default.profile"

LAYER_COLUMNS = (
    "layer", "flops", "latency_ms", "total_energy_uj", "avg_power_mw",
    "output_bytes", "efficiency_mj_per_mflop",
)
TX_COLUMNS = (
    "source_layer", "payload_bytes", "time_ms", "power_mw",
    "total_energy_uj", "energy_density_uj_per_byte",
)
SENSOR_COLUMNS = ("name", "avg_power_mw", "total_energy_3s_uj")
IDLE_COLUMNS = ("avg_power_mw",)

_SECTIONS = {
    "idle": IDLE_COLUMNS,
    "layers": LAYER_COLUMNS,
    "tx": TX_COLUMNS,
    "sensors": SENSOR_COLUMNS,
}


class ProfileError(ValueError):
    """Raised for unreadable or inconsistent profile data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class LayerCost:
    layer_index: int
    flops: int
    latency_ms: float
    energy_uj: float
    output_bytes: int
    avg_power_mw: float = 0.0
    efficiency: float = 0.0
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TxCost:
    source_layer: int
    payload_bytes: int
    time_ms: float
    energy_uj: float
    energy_density: float
    power_mw: float = 0.0
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SensorCost:
    name: str
    avg_power_mw: float
    window_energy_uj: float
    line: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FrameModel:
    """Frames the profiling tables do not cover.

    Beacons, results and raw sensor dumps are charged at the cheapest
    measured energy density. Raw frames take the airtime per byte of that
    same row.
    """

    beacon_bytes: int = 16
    beacon_airtime_ms: float = 5.0
    result_bytes: int = 8
    result_airtime_ms: float = 5.0
    raw_bytes: int = 400


@dataclass(frozen=True)
class HardwareProfile:
    idle_power_mw: float
    layers: tuple[LayerCost, ...]
    tx: tuple[TxCost, ...]
    sensors: tuple[SensorCost, ...]
    frames: FrameModel = FrameModel()

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def sensor(self, name: str) -> SensorCost:
        key = name.strip().lower()
        for s in self.sensors:
            if s.name.lower() == key:
                return s
        raise KeyError(f"unknown sensor {name!r}")

    def layer(self, k: int) -> LayerCost:
        if not 0 <= k < len(self.layers):
            raise IndexError(f"layer index {k} outside 0..{len(self.layers) - 1}")
        return self.layers[k]

    def tx_row(self, k: int) -> TxCost:
        if not 0 <= k < len(self.tx):
            raise IndexError(f"tx source layer {k} outside 0..{len(self.tx) - 1}")
        return self.tx[k]

    @property
    def cheapest_density(self) -> TxCost:
        return min(self.tx, key=lambda t: t.energy_density)

    def validate(self) -> "HardwareProfile":
        """Check every table invariant, raising :class:`ProfileError`."""
        if not self.idle_power_mw > 0:
            raise ProfileError("idle power must be positive")
        if not self.layers:
            raise ProfileError("profile has no layers")
        if len(self.layers) != len(self.tx):
            raise ProfileError(
                f"{len(self.layers)} layer rows but {len(self.tx)} tx rows")
        for i, lc in enumerate(self.layers):
            if lc.layer_index != i:
                raise ProfileError(
                    f"layer indices must be contiguous from 0, got {lc.layer_index} at position {i}",
                    lc.line)
            if not lc.energy_uj > 0:
                raise ProfileError(f"layer {i}: energy must be positive", lc.line)
            if not lc.latency_ms > 0:
                raise ProfileError(f"layer {i}: latency must be positive", lc.line)
            if not lc.output_bytes > 0:
                raise ProfileError(f"layer {i}: output size must be positive", lc.line)
        for i, t in enumerate(self.tx):
            if t.source_layer != i:
                raise ProfileError(
                    f"tx source layers must be contiguous from 0, got {t.source_layer} at position {i}",
                    t.line)
            if not (t.energy_uj > 0 and t.time_ms > 0 and t.payload_bytes > 0):
                raise ProfileError(f"tx row {i}: energy, time and payload must be positive", t.line)
            if abs(t.energy_density * t.payload_bytes - t.energy_uj) > 0.01 * t.energy_uj:
                raise ProfileError(
                    f"tx row {i}: density x payload = {t.energy_density * t.payload_bytes:.1f} uJ "
                    f"disagrees with total {t.energy_uj:.1f} uJ by more than 1%", t.line)
            if t.payload_bytes != self.layers[i].output_bytes:
                raise ProfileError(
                    f"tx row {i}: payload {t.payload_bytes} B != layer output {self.layers[i].output_bytes} B",
                    t.line)
        for s in self.sensors:
            if not (s.avg_power_mw > 0 and s.window_energy_uj > 0):
                raise ProfileError(f"sensor {s.name!r}: power and energy must be positive", s.line)
            expected = s.avg_power_mw * SENSOR_WINDOW_S * 1000.0
            if abs(expected - s.window_energy_uj) / s.window_energy_uj >= 0.01:
                raise ProfileError(
                    f"sensor {s.name!r}: {s.avg_power_mw} mW over 3 s is {expected:.0f} uJ, "
                    f"table says {s.window_energy_uj:.0f} uJ", s.line)
        return self


# -- operation kinds -------------------------------------------------------

@dataclass(frozen=True)
class Idle:
    seconds: float


@dataclass(frozen=True)
class Sense:
    sensor: str
    seconds: float


@dataclass(frozen=True)
class Infer:
    layer: int


@dataclass(frozen=True)
class Transmit:
    """Send the output tensor of ``layer``."""

    layer: int


@dataclass(frozen=True)
class TransmitRaw:
    pass


@dataclass(frozen=True)
class TransmitBeacon:
    pass


@dataclass(frozen=True)
class TransmitResult:
    pass


Operation = Union[Idle, Sense, Infer, Transmit, TransmitRaw, TransmitBeacon, TransmitResult]


def energy_of(profile: HardwareProfile, op: Operation) -> float:
    """Energy in joules for one operation, straight from the tables."""
    match op:
        case Idle(seconds=dt):
            return profile.idle_power_mw * 1e-3 * dt
        case Sense(sensor=name, seconds=dt):
            return profile.sensor(name).avg_power_mw * 1e-3 * dt
        case Infer(layer=k):
            return profile.layer(k).energy_uj * 1e-6
        case Transmit(layer=k):
            return profile.tx_row(k).energy_uj * 1e-6
        case TransmitRaw():
            return profile.frames.raw_bytes * profile.cheapest_density.energy_density * 1e-6
        case TransmitBeacon():
            return profile.frames.beacon_bytes * profile.cheapest_density.energy_density * 1e-6
        case TransmitResult():
            return profile.frames.result_bytes * profile.cheapest_density.energy_density * 1e-6
    raise TypeError(f"unknown operation {op!r}")


def duration_of(profile: HardwareProfile, op: Operation) -> float:
    """Wall time in seconds for a fixed-length operation."""
    match op:
        case Idle(seconds=dt) | Sense(seconds=dt):
            return dt
        case Infer(layer=k):
            return profile.layer(k).latency_ms * 1e-3
        case Transmit(layer=k):
            return profile.tx_row(k).time_ms * 1e-3
        case TransmitRaw():
            row = profile.cheapest_density
            return profile.frames.raw_bytes * row.time_ms / row.payload_bytes * 1e-3
        case TransmitBeacon():
            return profile.frames.beacon_airtime_ms * 1e-3
        case TransmitResult():
            return profile.frames.result_airtime_ms * 1e-3
    raise TypeError(f"unknown operation {op!r}")


def payload_bytes_of(profile: HardwareProfile, op: Operation) -> int:
    match op:
        case Transmit(layer=k):
            return profile.tx_row(k).payload_bytes
        case TransmitRaw():
            return profile.frames.raw_bytes
        case TransmitBeacon():
            return profile.frames.beacon_bytes
        case TransmitResult():
            return profile.frames.result_bytes
    raise TypeError(f"{op!r} is not a transmission")


def full_pass_energy(profile: HardwareProfile) -> float:
    """Joules for running every layer once on one node."""
    return sum(lc.energy_uj for lc in profile.layers) * 1e-6


def handoff_op(profile: HardwareProfile, layers_done: int) -> Operation:
    """The frame that carries a task onward after ``layers_done`` layers."""
    if layers_done == 0:
        return TransmitRaw()
    if layers_done >= profile.n_layers:
        return TransmitResult()
    return Transmit(layers_done - 1)


# -- split map -------------------------------------------------------------

@dataclass(frozen=True)
class SplitMap:
    """Cost of running a block of layers locally and shipping the result.

    ``energy_j[L]`` and ``v_req[L]`` describe a fresh task: run layers
    ``0..L-1`` then transmit what comes out (raw audio for ``L = 0``, the
    class label once every layer has run).
    """

    energy_j: tuple[float, ...]
    v_req: tuple[float, ...]
    volts_per_joule: float
    _profile: HardwareProfile = field(repr=False, compare=False)

    @property
    def n_layers(self) -> int:
        return len(self.energy_j) - 1

    def segment_energy(self, start: int, count: int) -> float:
        """Joules to run ``count`` layers from ``start`` and send the output."""
        p = self._profile
        if start < 0 or count < 0 or start + count > p.n_layers:
            raise IndexError(f"segment [{start}, {start + count}) outside 0..{p.n_layers}")
        e = sum(p.layers[k].energy_uj for k in range(start, start + count)) * 1e-6
        return e + energy_of(p, handoff_op(p, start + count))

    def segment_v_req(self, start: int, count: int) -> float:
        if start == 0:
            return self.v_req[count]
        return self.segment_energy(start, count) * self.volts_per_joule


def build_split_map(profile: HardwareProfile, battery: "BatteryModel") -> SplitMap:
    vpj = battery.volts_per_joule
    energies = []
    for n in range(profile.n_layers + 1):
        e = sum(profile.layers[k].energy_uj for k in range(n)) * 1e-6
        energies.append(e + energy_of(profile, handoff_op(profile, n)))
    return SplitMap(
        energy_j=tuple(energies),
        v_req=tuple(e * vpj for e in energies),
        volts_per_joule=vpj,
        _profile=profile,
    )


# -- file IO ---------------------------------------------------------------

def _split_sections(text: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise ProfileError(f"unknown section [{current}]", lineno)
            if current in sections:
                raise ProfileError(f"duplicate section [{current}]", lineno)
            sections[current] = []
            continue
        if current is None:
            raise ProfileError("data before the first section header", lineno)
        sections[current].append((lineno, line))
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise ProfileError(f"missing section(s): {', '.join('[' + m + ']' for m in missing)}")
    return sections


def _rows(name: str, lines: list[tuple[int, str]]) -> list[tuple[int, dict[str, str]]]:
    expected = _SECTIONS[name]
    if not lines:
        raise ProfileError(f"section [{name}] is empty")
    head_line, head = lines[0]
    header = [h.strip() for h in next(csv.reader([head]))]
    if tuple(header) != expected:
        raise ProfileError(
            f"[{name}] header must be {','.join(expected)}; got {','.join(header)}", head_line)
    out = []
    for lineno, line in lines[1:]:
        cells = [c.strip() for c in next(csv.reader([line]))]
        if len(cells) != len(expected):
            raise ProfileError(
                f"[{name}] row has {len(cells)} cells, expected {len(expected)}", lineno)
        out.append((lineno, dict(zip(expected, cells))))
    return out


def _num(row: dict[str, str], key: str, lineno: int, kind=float):
    raw = row[key].replace("_", "")
    try:
        value = kind(raw)
    except ValueError:
        raise ProfileError(f"column {key!r}: cannot parse {row[key]!r}", lineno) from None
    if kind is float and value != value:
        raise ProfileError(f"column {key!r}: NaN", lineno)
    return value


def parse_profile(text: str, frames: FrameModel | None = None) -> HardwareProfile:
    sections = _split_sections(text)

    idle_rows = _rows("idle", sections["idle"])
    if len(idle_rows) != 1:
        raise ProfileError(f"[idle] must hold exactly one row, found {len(idle_rows)}")
    lineno, row = idle_rows[0]
    idle = _num(row, "avg_power_mw", lineno)
    if not idle > 0:
        raise ProfileError("idle power must be positive", lineno)

    layers = tuple(
        LayerCost(
            layer_index=_num(r, "layer", n, int),
            flops=_num(r, "flops", n, int),
            latency_ms=_num(r, "latency_ms", n),
            energy_uj=_num(r, "total_energy_uj", n),
            output_bytes=_num(r, "output_bytes", n, int),
            avg_power_mw=_num(r, "avg_power_mw", n),
            efficiency=_num(r, "efficiency_mj_per_mflop", n),
            line=n,
        )
        for n, r in _rows("layers", sections["layers"])
    )
    tx = tuple(
        TxCost(
            source_layer=_num(r, "source_layer", n, int),
            payload_bytes=_num(r, "payload_bytes", n, int),
            time_ms=_num(r, "time_ms", n),
            energy_uj=_num(r, "total_energy_uj", n),
            energy_density=_num(r, "energy_density_uj_per_byte", n),
            power_mw=_num(r, "power_mw", n),
            line=n,
        )
        for n, r in _rows("tx", sections["tx"])
    )
    sensors = tuple(
        SensorCost(
            name=r["name"],
            avg_power_mw=_num(r, "avg_power_mw", n),
            window_energy_uj=_num(r, "total_energy_3s_uj", n),
            line=n,
        )
        for n, r in _rows("sensors", sections["sensors"])
    )
    profile = HardwareProfile(idle, layers, tx, sensors, frames or FrameModel())
    return profile.validate()


def load_profile(path: str | Path | None = None, frames: FrameModel | None = None) -> HardwareProfile:
    """Read and validate a profile file; ``None`` loads the bundled default."""
    if path is None or str(path) == "default":
        text = resources.files("harvestnet.data").joinpath(DEFAULT_PROFILE).read_text()
    else:
        try:
            text = Path(path).read_text()
        except FileNotFoundError:
            raise ProfileError(f"profile file not found: {path}") from None
    return parse_profile(text, frames)


def _fmt(x: float) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def dump_profile(profile: HardwareProfile) -> str:
    """Serialize to the sectioned text format read by :func:`parse_profile`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write("[idle]\n")
    w.writerow(IDLE_COLUMNS)
    w.writerow([_fmt(profile.idle_power_mw)])
    buf.write("\n[layers]\n")
    w.writerow(LAYER_COLUMNS)
    for lc in profile.layers:
        w.writerow([lc.layer_index, lc.flops, _fmt(lc.latency_ms), _fmt(lc.energy_uj),
                    _fmt(lc.avg_power_mw), lc.output_bytes, _fmt(lc.efficiency)])
    buf.write("\n[tx]\n")
    w.writerow(TX_COLUMNS)
    for t in profile.tx:
        w.writerow([t.source_layer, t.payload_bytes, _fmt(t.time_ms), _fmt(t.power_mw),
                    _fmt(t.energy_uj), _fmt(t.energy_density)])
    buf.write("\n[sensors]\n")
    w.writerow(SENSOR_COLUMNS)
    for s in profile.sensors:
        w.writerow([s.name, _fmt(s.avg_power_mw), _fmt(s.window_energy_uj)])
    return buf.getvalue()
