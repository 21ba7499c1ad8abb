"""Command-line entry point.

    lightguard sweep        rekey success rate across LiFi misalignment angles
    lightguard trace        WiFi throughput/latency over time with periodic rekeys
    lightguard adversarial  RF and LiFi eavesdroppers, LightGuard vs in-band baseline
    lightguard faults       randomized fault schedules against the commit phase
    lightguard validate-config
    lightguard selftest     crypto known-answer vectors
    lightguard plotdata     gnuplot-ready columns from experiment outputs

Exit status: 0 success, 1 invariant violation (or a failed self-check), 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import MODES, ConfigError, ScenarioConfig, default_scenario, load_config
from .experiments import (ExperimentSpec, run_adversarial, run_angle_sweep, run_commit_faults, run_trace,
                          write_plot_data)
from .netsim import InvariantViolation
from .selftest import run_selftest

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG = 0, 1, 2


def _scenario(args, kind: str) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else default_scenario(kind)
    cfg.experiment.kind = kind
    if args.mode is not None:
        cfg.sim.mode = args.mode
    if args.seed is not None:
        cfg.sim.seed = args.seed
    return cfg.validate()


def _out(args, kind: str) -> Path:
    return Path(args.out) if args.out else Path("out") / kind


def _print_files(files) -> None:
    for f in files:
        print(f"wrote {f}")


def cmd_sweep(args) -> int:
    cfg = _scenario(args, "sweep")
    seeds = [cfg.sim.seed + j for j in range(cfg.experiment.attempts)]
    res = run_angle_sweep(ExperimentSpec("sweep", cfg, seeds, _out(args, "sweep")), jobs=args.jobs)
    for row in res.rows:
        print(f"{row.angle_deg:7.1f} deg  {row.successes:4d}/{row.attempts:<4d}  {row.success_rate:.3f}")
    print(f"failure threshold: {res.threshold_deg} deg")
    _print_files(res.files)
    return EXIT_OK


def cmd_trace(args) -> int:
    cfg = _scenario(args, "trace")
    res = run_trace(ExperimentSpec("trace", cfg, [cfg.sim.seed], _out(args, "trace")))
    print(json.dumps(res.summary, sort_keys=True, indent=2))
    _print_files(res.files)
    return EXIT_OK


def cmd_adversarial(args) -> int:
    mode = args.mode
    args.mode = None  # both modes share every other setting
    cfg = _scenario(args, "adversarial")
    modes = (mode,) if mode else MODES
    seeds = cfg.experiment.seed_list(cfg.sim.seed)
    rep = run_adversarial(ExperimentSpec("adversarial", cfg, seeds, _out(args, "adversarial")), modes)
    for m, info in rep.summary["modes"].items():
        for tap_id, t in info["taps"].items():
            methods = ", ".join(f"{k}={v}" for k, v in t["methods"].items() if v)
            print(f"{m:10s} {tap_id:10s} {t['medium']:4s} {methods}  validated={t['validated']}")
        print(f"{m:10s} confinement true in {info['confinement_true_runs']}/{len(seeds)} runs")
    _print_files(rep.files)
    return EXIT_OK


def cmd_faults(args) -> int:
    base = load_config(args.config) if args.config else None
    trials = run_commit_faults(args.runs, args.seed or 0, base)
    bad = [t for t in trials if not t.ok]
    committed = sum(1 for t in trials if t.rekey_success)
    print(f"{len(trials)} schedules: {committed} committed, {len(trials) - committed} aborted, {len(bad)} bad")
    for t in bad[:10]:
        print(f"  seed {t.fault_seed}: {t}")
    if any(t.violation for t in bad):
        print(f"invariant violation: {next(t.violation for t in bad if t.violation)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_validate(args) -> int:
    if not args.config:
        raise ConfigError("validate-config needs --config")
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.experiment.kind}, mode {cfg.sim.mode}, {len(cfg.taps)} taps)")
    return EXIT_OK


def cmd_selftest(args) -> int:
    ok = True
    for name, passed in run_selftest():
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok = ok and passed
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_plotdata(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        raise ConfigError(f"{src} is not a directory")
    files = write_plot_data(src, _out(args, "plot"))
    if not files:
        raise ConfigError(f"no experiment outputs found in {src}")
    _print_files(files)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario TOML file")
    common.add_argument("--seed", type=int, help="base seed (u64)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("--mode", choices=MODES, help="lightguard or in-band baseline")

    parser = argparse.ArgumentParser(prog="lightguard", description="LiFi-bootstrapped WiFi key management simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="rekey success vs LiFi angle").set_defaults(func=cmd_sweep)
    sub.add_parser("trace", parents=[common], help="throughput/latency trace").set_defaults(func=cmd_trace)
    sub.add_parser("adversarial", parents=[common],
                   help="eavesdropper A/B (both modes unless --mode)").set_defaults(func=cmd_adversarial)
    p = sub.add_parser("faults", parents=[common], help="commit-phase fault campaign")
    p.add_argument("--runs", type=int, default=1000)
    p.set_defaults(func=cmd_faults)
    sub.add_parser("validate-config", parents=[common], help="check a scenario file").set_defaults(func=cmd_validate)
    sub.add_parser("selftest", parents=[common], help="crypto known-answer vectors").set_defaults(func=cmd_selftest)
    p = sub.add_parser("plotdata", parents=[common], help="gnuplot data from experiment outputs")
    p.add_argument("--in", dest="input", required=True, help="directory holding experiment outputs")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: hook={exc.hook} event={exc.event} t_ms={exc.time_ms:.3f}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
