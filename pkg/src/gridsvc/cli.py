"""Command-line entry point: ``gridsvc {run,sweep-rho,sweep-pilots,gen-network}``.

Every scenario verb starts from a scenario file (the bundled event script by
default) and applies the flags given on the command line on top of it.
Exit status is 2 for malformed fixtures or flag values and 0 otherwise;
controller non-convergence is reported, not fatal.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import plotting
from .exceptions import FixtureError
from .fixtures import (
    LoadEvent,
    Scenario,
    SensorNoise,
    SyntheticSpec,
    _parse_network_ref,
    _triple,
    bundled,
    read_scenario,
    write_network,
)
from .harness import run_scenario, sweep_compression, sweep_pilots

DEFAULT_SCENARIO = "load_steps.scn"
DEFAULT_RHOS = (1, 2, 3, 4, 5, 6, 7, 8)


def _pair(text: str) -> tuple[float, float]:
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'LOW,HIGH', got {text!r}")
    return float(parts[0]), float(parts[1])


def _numbers(cast):
    def parse(text: str) -> list:
        try:
            return [cast(p) for p in text.replace(",", " ").split()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None

    return parse


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--scenario", type=Path, help="scenario file (default: bundled event script)")
    g.add_argument("--network", help="network file, or 'synthetic AREAS N_GEN N_CAP N_LOAD SEED'")
    g.add_argument("--duration-s", type=float)
    g.add_argument("--event", action="append", metavar="T,BUSES,FACTOR",
                   help="load event, repeatable; replaces the file's events")
    g.add_argument("--no-events", action="store_true", help="drop all load events")
    g.add_argument("--sensor-noise", action="append", metavar="T,BUSES,SNR_DB",
                   help="voltage sensor noise, repeatable; replaces the file's entries")
    g.add_argument("--pilots", help="'all' or a list of load bus numbers")
    g.add_argument("--rho", type=float)
    g.add_argument("--bandwidth-bps", type=float)
    g.add_argument("--latency-s", type=float)
    g.add_argument("--channel-snr-db", type=float)
    g.add_argument("--m2", type=int)
    g.add_argument("--threshold", type=float)
    g.add_argument("--selection-tol", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--max-iterations", type=int)
    g.add_argument("--rng-seed", type=int)
    g.add_argument("--sample-period-s", type=float)
    g.add_argument("--window", type=int)
    g.add_argument("--v-step", type=float)
    g.add_argument("--q-step", type=float)
    g.add_argument("--v-gen-limits", type=_pair, metavar="LOW,HIGH")
    g.add_argument("--q-cap-limits", type=_pair, metavar="LOW,HIGH")
    p.add_argument("--out", type=Path, required=True, help="CSV output path; figures are written beside it")
    p.add_argument("--no-plots", action="store_true")


def scenario_from_args(args: argparse.Namespace) -> Scenario:
    """Scenario file plus command-line overrides; raises FixtureError on bad values."""
    s = read_scenario(args.scenario if args.scenario is not None else bundled(DEFAULT_SCENARIO))
    try:
        changes: dict = {}
        if args.network is not None:
            changes["network"] = _parse_network_ref(args.network, Path.cwd(), "--network")
        if args.no_events:
            changes["events"] = ()
        if args.event:
            changes["events"] = tuple(LoadEvent(*_triple(e, "--event")) for e in args.event)
        if args.sensor_noise:
            changes["sensor_noise"] = tuple(SensorNoise(*_triple(e, "--sensor-noise")) for e in args.sensor_noise)
        if args.pilots is not None:
            text = args.pilots.strip()
            changes["pilot_buses"] = () if text == "all" else tuple(int(b) for b in text.replace(",", " ").split())
        simple = {
            "duration_s": args.duration_s,
            "rho": args.rho,
            "rng_seed": args.rng_seed,
            "sample_period_s": args.sample_period_s,
            "window": args.window,
            "v_step": args.v_step,
            "q_step": args.q_step,
            "v_gen_limits": args.v_gen_limits,
            "q_cap_limits": args.q_cap_limits,
        }
        changes.update({k: v for k, v in simple.items() if v is not None})

        ch = {"bandwidth_bps": args.bandwidth_bps, "fixed_latency_s": args.latency_s, "noise_snr_db": args.channel_snr_db}
        changes["channel"] = replace(s.channel, **{k: v for k, v in ch.items() if v is not None})
        det = {"m2": args.m2, "threshold": args.threshold, "selection_tol": args.selection_tol}
        changes["detector"] = replace(s.detector, **{k: v for k, v in det.items() if v is not None})
        ctl = {"beta": args.beta, "epsilon": args.epsilon, "max_iterations": args.max_iterations}
        changes["controller"] = replace(s.controller, **{k: v for k, v in ctl.items() if v is not None})
        return replace(s, **changes)
    except ValueError as exc:
        raise FixtureError(str(exc)) from None


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _cmd_run(args: argparse.Namespace) -> int:
    s = scenario_from_args(args)
    report = run_scenario(s)
    report.write_csv(args.out)
    if not args.no_plots:
        plotting.plot_run(report, args.out)
    print(json.dumps(report.summary()))
    return 0


def _cmd_sweep_rho(args: argparse.Namespace) -> int:
    s = scenario_from_args(args)
    rhos = args.rhos or list(DEFAULT_RHOS)
    if any(not r >= 1 for r in rhos):
        raise FixtureError("every compression ratio must be >= 1")
    table = sweep_compression(s, rhos, n_windows=args.n_windows, n_states=args.n_states)
    _write_table(args.out, ("rho", "median_snr_db"), [(f"{r:g}", f"{v:.6g}") for r, v in table])
    if not args.no_plots:
        plotting.plot_rho_sweep(table, args.out)
    for r, v in table:
        print(f"rho={r:g} median_snr_db={v:.3f}")
    return 0


def _cmd_sweep_pilots(args: argparse.Namespace) -> int:
    s = scenario_from_args(args)
    n_load = len(s.load_network().load_buses)
    counts = args.counts or list(range(1, n_load + 1))
    if any(not 1 <= c <= n_load for c in counts):
        raise FixtureError(f"pilot counts must lie in [1, {n_load}]")
    table = sweep_pilots(s, counts)
    _write_table(args.out, ("pilots", "final_x_rms"), [(c, f"{x:.10g}") for c, x in table])
    if not args.no_plots:
        plotting.plot_pilot_sweep(table, args.out)
    for c, x in table:
        print(f"pilots={c} final_x_rms={x:.4e}")
    return 0


def _cmd_gen_network(args: argparse.Namespace) -> int:
    try:
        net = SyntheticSpec(args.areas, args.n_gen, args.n_cap, args.n_load, args.seed).build()
    except ValueError as exc:
        raise FixtureError(str(exc)) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_network(net, args.out)
    print(f"wrote {args.out} ({sum(net.buses_per_area)} buses in {net.n_areas} areas)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridsvc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write the per-step CSV")
    _add_scenario_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep-rho", help="median recovery SNR per compression ratio")
    _add_scenario_flags(p)
    p.add_argument("--rhos", type=_numbers(float), help="comma separated ratios")
    p.add_argument("--n-windows", type=int, default=20)
    p.add_argument("--n-states", type=int, help="telemetry size (default: two states per network bus)")
    p.set_defaults(func=_cmd_sweep_rho)

    p = sub.add_parser("sweep-pilots", help="final x_rms per number of pilot buses")
    _add_scenario_flags(p)
    p.add_argument("--counts", type=_numbers(int), help="comma separated pilot counts (default: 1..nL)")
    p.set_defaults(func=_cmd_sweep_pilots)

    p = sub.add_parser("gen-network", help="write a seeded synthetic network fixture")
    p.add_argument("--areas", type=int, default=3)
    p.add_argument("--n-gen", type=int, default=3)
    p.add_argument("--n-cap", type=int, default=2)
    p.add_argument("--n-load", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_gen_network)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FixtureError as exc:
        print(f"fixture error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
