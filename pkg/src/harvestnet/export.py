"""CSV and SVG outputs for single runs and mode comparisons."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence
from xml.sax.saxutils import escape

if TYPE_CHECKING:
    from harvestnet.compare import ComparisonReport
    from harvestnet.engine import Metrics

COVERAGE_HEADER = ("t_s", "coverage_frac")
EVENTS_HEADER = ("t_s", "x_m", "y_m", "captured", "node_id")
NODES_HEADER = ("node_id", "x_m", "y_m", "env", "initial_soc_j", "final_soc_j", "harvested_j",
                "wasted_j", "consumed_j", "sensing_s", "sensing_windows", "final_phase")
PACKETS_HEADER = ("t_s", "sender", "kind", "bytes", "target", "receivers")


def _num(x: float) -> str:
    return f"{x:.9g}"


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_run(metrics: "Metrics", out_dir: str | Path, packets: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "coverage.csv"
    _write_csv(p, COVERAGE_HEADER,
               ((_num(t), _num(c)) for t, c in zip(metrics.sample_t, metrics.coverage)))
    written.append(p)

    p = out / "events.csv"
    _write_csv(p, EVENTS_HEADER, (
        (_num(e.time), _num(e.position.x), _num(e.position.y), int(e.captured_by is not None),
         "" if e.captured_by is None else e.captured_by)
        for e in metrics.events))
    written.append(p)

    p = out / "nodes.csv"
    _write_csv(p, NODES_HEADER, (
        [_num(r[k]) if isinstance(r[k], float) else r[k] for k in NODES_HEADER]
        for r in metrics.nodes))
    written.append(p)

    if packets:
        p = out / "packets.csv"
        _write_csv(p, PACKETS_HEADER, (
            (_num(t), s, kind, size, "" if target is None else target, " ".join(map(str, rx)))
            for t, s, kind, size, target, rx in metrics.packets))
        written.append(p)

    p = out / "summary.txt"
    p.write_text(run_summary(metrics))
    written.append(p)

    p = out / "summary.svg"
    p.write_text(summary_svg(metrics))
    written.append(p)
    return written


def run_summary(m: "Metrics") -> str:
    lines = [
        f"mode                  {m.mode}",
        f"seed                  {m.seed}",
        f"duration_s            {_num(m.duration_s)}",
        f"region_area_m2        {m.region.area:.2f}",
        f"mean_coverage_pct     {m.mean_coverage * 100:.4f}",
        f"std_coverage_pct      {m.std_coverage * 100:.4f}",
        f"events_occurred       {m.events_occurred}",
        f"events_captured       {m.events_captured}",
        f"wasted_harvest_j      {m.wasted_harvest:.6f}",
        f"energy_audit_error_j  {m.audit_error:.3e}",
        f"hysteresis_violations {m.hysteresis_violations}",
    ]
    lines += [f"{k:<21} {v}" for k, v in m.counters.items()]
    return "\n".join(lines) + "\n"


# -- svg -------------------------------------------------------------------

_ENV_FILL = {"sunny": "#f2b134", "shady": "#6b7b8c"}
_PHASE_STROKE = {"deep_sleep": "#b22222", "sleeping": "#333333"}


def _polyline(xs: Sequence[float], ys: Sequence[float], box: tuple[float, float, float, float],
              x_max: float, stroke: str) -> str:
    x0, y0, w, h = box
    if len(xs) == 0 or x_max <= 0:
        return ""
    step = max(1, len(xs) // 2000)
    pts = " ".join(f"{x0 + w * xs[i] / x_max:.2f},{y0 + h * (1 - ys[i]):.2f}"
                   for i in range(0, len(xs), step))
    return f'<polyline fill="none" stroke="{stroke}" stroke-width="1" points="{pts}"/>'


def _axes(box, title: str) -> list[str]:
    x0, y0, w, h = box
    return [
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#999"/>',
        f'<text x="{x0}" y="{y0 - 6}" font-size="12" font-family="sans-serif">{escape(title)}</text>',
        f'<text x="{x0 - 4}" y="{y0 + 4}" font-size="9" text-anchor="end">1</text>',
        f'<text x="{x0 - 4}" y="{y0 + h}" font-size="9" text-anchor="end">0</text>',
    ]


def summary_svg(m: "Metrics") -> str:
    width, height = 900, 360
    cov_box = (40, 30, 480, 280)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    parts += _axes(cov_box, f"coverage vs time ({m.mode}, seed {m.seed})")
    parts.append(_polyline(m.sample_t, m.coverage, cov_box, m.duration_s, "#1f77b4"))

    map_x, map_y, map_w, map_h = 560, 30, 320, 280
    parts.append(f'<text x="{map_x}" y="{map_y - 6}" font-size="12" font-family="sans-serif">'
                 f'node map (fill: environment, ring: final phase)</text>')
    reg = m.region
    span = max(reg.width, reg.height, 1e-9)
    scale = min(map_w, map_h) / span
    for row in m.nodes:
        cx = map_x + (row["x_m"] - reg.xmin) * scale
        cy = map_y + map_h - (row["y_m"] - reg.ymin) * scale
        fill = _ENV_FILL.get(row["env"], "#cccccc")
        stroke = _PHASE_STROKE.get(row["final_phase"], "#2ca02c")
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="{fill}" stroke="{stroke}"/>')
    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"


def comparison_svg(report: "ComparisonReport") -> str:
    box = (40, 30, 620, 280)
    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="700" height="360">']
    parts += _axes(box, "coverage vs time, first seed")
    first = report.first_pair
    if first is not None:
        a, b = first
        parts.append(_polyline(a.sample_t, a.coverage, box, a.duration_s, "#d62728"))
        parts.append(_polyline(b.sample_t, b.coverage, box, b.duration_s, "#1f77b4"))
        parts.append(f'<text x="500" y="330" font-size="11" fill="#d62728">{escape(a.mode)}</text>')
        parts.append(f'<text x="580" y="330" font-size="11" fill="#1f77b4">{escape(b.mode)}</text>')
    parts.append("</svg>")
    return "\n".join(p for p in parts if p) + "\n"
