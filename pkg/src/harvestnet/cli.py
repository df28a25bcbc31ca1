"""Command line entry point.

Exit codes: 0 success, 1 configuration or profile error, 2 invariant breach.
"""

from __future__ import annotations

import argparse
import sys

from harvestnet.compare import compare_modes
from harvestnet.config import ConfigError, load_config
from harvestnet.engine import InvariantBreach, run
from harvestnet.export import run_summary, write_run
from harvestnet.profiles import ProfileError, full_pass_energy, load_profile

EXIT_OK, EXIT_CONFIG, EXIT_BREACH = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harvestnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one mode for one seed")
    p.add_argument("--config", default="paper-default", help="config file or 'paper-default'")
    p.add_argument("--mode", choices=("vanilla", "algorithm"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (default: out_dir from the config)")
    p.add_argument("--packets", action="store_true", help="also write packets.csv")

    p = sub.add_parser("compare", help="paired vanilla/algorithm runs over several seeds")
    p.add_argument("--config", default="paper-default")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at the config seed")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")

    p = sub.add_parser("validate-profile", help="check a hardware profile file")
    p.add_argument("file")
    return ap


def _cmd_run(args) -> int:
    cfg = load_config(args.config, mode=args.mode, seed=args.seed)
    if args.packets:
        cfg = cfg.replace(export_packets=True)
    m = run(cfg)
    out = args.out or cfg.out_dir
    write_run(m, out, packets=cfg.export_packets)
    sys.stdout.write(run_summary(m))
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    cfg = load_config(args.config, seed=args.seed)
    report = compare_modes(cfg, args.seeds, jobs=args.jobs)
    out = args.out or cfg.out_dir
    report.write(out)
    sys.stdout.write(report.to_text())
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    prof = load_profile(args.file)
    print(f"ok: {len(prof.layers)} layers, {len(prof.tx)} tx rows, {len(prof.sensors)} sensors, "
          f"idle {prof.idle_power_mw} mW, full pass {full_pass_energy(prof) * 1e6:.0f} uJ")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "validate-profile": _cmd_validate}[args.command]
    try:
        return handler(args)
    except (ConfigError, ProfileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_BREACH


if __name__ == "__main__":
    sys.exit(main())
