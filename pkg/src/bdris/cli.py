"""Command line front end: `simulate` runs one scenario, `sweep` runs a preset."""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .errors import BdrisError, ConfigError
from .scenario import ScenarioConfig, load_config, run_preset, run_scenario, append_records_csv


def _config_key_help() -> str:
    lines = ["configuration keys (JSON file) and their defaults:"]
    for f in dataclasses.fields(ScenarioConfig):
        lines.append(f"  {f.name} = {f.default}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bdris",
        description="Massive MIMO downlink simulator with a BS-side RIS",
        epilog=_config_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate",
        help="run a single scenario from a JSON config",
        epilog=_config_key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sim.add_argument("--config", required=True, help="path to a flat JSON config file")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--arch", choices=("bd", "d", "none"), default=None)
    sim.add_argument("--out", default=None, help="CSV file to append the result to")
    sim.add_argument("--mc", type=int, default=None, help="Monte-Carlo realizations")
    sim.add_argument("--K", type=int, default=None, dest="K", help="number of users")

    swp = sub.add_parser("sweep", help="run a named experiment preset")
    swp.add_argument("--preset", required=True, choices=("fig2", "fig3a", "fig3b"))
    swp.add_argument("--out", default="results.csv")
    swp.add_argument("--topologies", type=int, default=20)
    swp.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_simulate(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.arch is not None:
        overrides["architecture"] = args.arch
    if args.mc is not None:
        overrides["mc_count"] = args.mc
    if args.K is not None:
        overrides["k"] = args.K
    config = load_config(args.config, overrides)
    record = run_scenario(config)
    print(
        f"arch={record.arch} M={record.m} N={record.n} K={record.k} Q={record.q} "
        f"tau_up={record.tau_up} seed={record.seed}"
    )
    for i, se in enumerate(record.se_per_user):
        print(f"  SE user {i + 1}: {se:.6g} bits/s/Hz")
    print(f"  min SE: {record.min_se:.6g}  avg SE: {record.avg_se:.6g}")
    if record.opt_cost is not None:
        print(f"  optimizer: cost {record.opt_cost:.6g} after {record.opt_iters} iterations")
    if args.out:
        append_records_csv(args.out, [record])
        print(f"  appended to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    records = run_preset(args.preset, args.out, args.topologies, args.seed)
    print(f"{len(records)} runs written to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (BdrisError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2


def main_simulate(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    return main(["simulate", *argv])


def main_sweep(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    return main(["sweep", *argv])


if __name__ == "__main__":
    sys.exit(main())
