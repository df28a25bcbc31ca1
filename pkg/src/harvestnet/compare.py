"""Paired Vanilla/Algorithm runs over one or more seeds."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from harvestnet.config import ScenarioConfig
from harvestnet.engine import Metrics, build_world, run

SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class SeedRow:
    seed: int
    base_mode: str
    test_mode: str
    base_mean: float
    test_mean: float
    base_std: float
    test_std: float
    d_mean: float
    d_std: float
    extra_area_m2: float
    occurred: int
    base_captured: int
    test_captured: int
    d_events: int
    d_capture_rate: float
    d_events_per_day: float


@dataclass
class ComparisonReport:
    rows: list[SeedRow]
    region_area_m2: float
    duration_s: float
    first_pair: tuple[Metrics, Metrics] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.rows)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[Metrics, Metrics]]) -> "ComparisonReport":
        rows = [pair_row(a, b) for a, b in pairs]
        if not pairs:
            return cls(rows, 0.0, 0.0)
        first = pairs[0][0]
        return cls(rows, first.region.area, first.duration_s, pairs[0])

    def _avg(self, key: str) -> float:
        return sum(getattr(r, key) for r in self.rows) / self.n if self.rows else 0.0

    @property
    def d_mean(self) -> float:
        return self._avg("d_mean")

    @property
    def d_std(self) -> float:
        return self._avg("d_std")

    @property
    def extra_area_m2(self) -> float:
        return self.d_mean * self.region_area_m2

    @property
    def occurred(self) -> int:
        return sum(r.occurred for r in self.rows)

    @property
    def d_events(self) -> int:
        return sum(r.d_events for r in self.rows)

    @property
    def d_capture_rate(self) -> float:
        """Pooled capture-rate difference over all seeds."""
        return self.d_events / self.occurred if self.occurred else 0.0

    @property
    def d_events_per_day(self) -> float:
        return self._avg("d_events_per_day")

    @property
    def mean_wins(self) -> int:
        return sum(r.test_mean > r.base_mean for r in self.rows)

    @property
    def std_wins(self) -> int:
        return sum(r.test_std < r.base_std for r in self.rows)

    def aggregate(self) -> dict:
        return dict(
            seeds=self.n, base_mean=self._avg("base_mean"), test_mean=self._avg("test_mean"),
            base_std=self._avg("base_std"), test_std=self._avg("test_std"),
            d_mean=self.d_mean, d_std=self.d_std, extra_area_m2=self.extra_area_m2,
            occurred=self.occurred, d_events=self.d_events, d_capture_rate=self.d_capture_rate,
            d_events_per_day=self.d_events_per_day, mean_wins=self.mean_wins, std_wins=self.std_wins,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(SeedRow.__dataclass_fields__)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row"] + names)
        for r in self.rows:
            d = asdict(r)
            w.writerow(["seed"] + [_fmt(d[k]) for k in names])
        agg = self.aggregate()
        w.writerow(["aggregate"] + [_fmt(agg.get(k, "")) for k in names])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'seed':>6} {'base%':>8} {'test%':>8} {'dmean_pp':>9} {'base_sd':>8} {'test_sd':>8} "
                 f"{'extra_m2':>9} {'occ':>5} {'b_cap':>5} {'t_cap':>5} {'d/day':>8}"]
        for r in self.rows:
            lines.append(f"{r.seed:>6} {r.base_mean * 100:8.2f} {r.test_mean * 100:8.2f} {r.d_mean * 100:9.2f} "
                         f"{r.base_std * 100:8.2f} {r.test_std * 100:8.2f} {r.extra_area_m2:9.1f} "
                         f"{r.occurred:>5} {r.base_captured:>5} {r.test_captured:>5} {r.d_events_per_day:8.1f}")
        a = self.aggregate()
        lines += [
            "",
            f"modes                    {self.rows[0].base_mode} -> {self.rows[0].test_mode}" if self.rows else "modes",
            f"seeds                    {a['seeds']}",
            f"mean coverage            {a['base_mean'] * 100:.2f}% -> {a['test_mean'] * 100:.2f}% "
            f"({a['d_mean'] * 100:+.2f} pp)",
            f"coverage std             {a['base_std'] * 100:.2f} -> {a['test_std'] * 100:.2f} "
            f"({a['d_std'] * 100:+.2f} pp)",
            f"extra area               {a['extra_area_m2']:.1f} m2 of {self.region_area_m2:.1f} m2",
            f"events captured delta    {a['d_events']:+d} of {a['occurred']} ({a['d_capture_rate'] * 100:+.2f} pp)",
            f"projected delta per day  {a['d_events_per_day']:+.1f} events",
            f"seeds with higher mean   {a['mean_wins']}/{a['seeds']}",
            f"seeds with lower std     {a['std_wins']}/{a['seeds']}",
        ]
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path) -> list[Path]:
        from harvestnet.export import comparison_svg

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = [(out / "report.txt", self.to_text()), (out / "report.csv", self.to_csv()),
                 (out / "summary.svg", comparison_svg(self))]
        for p, text in files:
            p.write_text(text)
        return [p for p, _ in files]


def _fmt(v) -> str:
    return f"{v:.9g}" if isinstance(v, float) else str(v)


def pair_row(base: Metrics, test: Metrics) -> SeedRow:
    d_mean = test.mean_coverage - base.mean_coverage
    d_events = test.events_captured - base.events_captured
    occurred = base.events_occurred
    return SeedRow(
        seed=base.seed, base_mode=base.mode, test_mode=test.mode,
        base_mean=base.mean_coverage, test_mean=test.mean_coverage,
        base_std=base.std_coverage, test_std=test.std_coverage,
        d_mean=d_mean, d_std=test.std_coverage - base.std_coverage,
        extra_area_m2=d_mean * base.region.area, occurred=occurred,
        base_captured=base.events_captured, test_captured=test.events_captured, d_events=d_events,
        d_capture_rate=d_events / occurred if occurred else 0.0,
        d_events_per_day=d_events * SECONDS_PER_DAY / base.duration_s if base.duration_s > 0 else 0.0,
    )


def run_pair(cfg: ScenarioConfig, modes: tuple[str, str] = ("vanilla", "algorithm")) -> tuple[Metrics, Metrics]:
    """Both modes on one shared world."""
    world = build_world(cfg)
    return tuple(run(cfg.replace(mode=m), world) for m in modes)  # type: ignore[return-value]


def run_pairs(cfg: ScenarioConfig, seeds: int | Sequence[int] = 1,
              modes: tuple[str, str] = ("vanilla", "algorithm"), jobs: int = 1) -> list[tuple[Metrics, Metrics]]:
    """An integer ``seeds`` means ``cfg.seed, cfg.seed + 1, ...``.

    With ``jobs > 1`` seeds run in worker processes; results do not depend
    on it.
    """
    seed_list = [cfg.seed + k for k in range(seeds)] if isinstance(seeds, int) else list(seeds)
    cfgs = [cfg.replace(seed=s) for s in seed_list]
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_pair, cfgs, [modes] * len(cfgs)))
    return [run_pair(c, modes) for c in cfgs]


def compare_modes(cfg: ScenarioConfig, seeds: int | Sequence[int] = 1,
                  modes: tuple[str, str] = ("vanilla", "algorithm"), jobs: int = 1) -> ComparisonReport:
    """Run both modes on the same world for each seed and tabulate the deltas."""
    return ComparisonReport.from_pairs(run_pairs(cfg, seeds, modes, jobs))
