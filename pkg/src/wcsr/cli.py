"""Command-line entry point: ``wcsr run|validate|matrix dump|figures``."""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .harness import ConfigError, emit_results, format_results, load_config, run_experiment
from .sensing import build_sensing_matrix, dump_matrix
from .spectrum import OccupancyProfile

FIGURE_CONFIGS = ("fig1_error_vs_snr.json", "fig2_error_vs_m.json", "fig3_coop_vs_gap.json")


def canned_config(name: str) -> Path:
    return Path(str(resources.files("wcsr") / "configs" / name))


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wcsr", description="Weighted-CSR spectrum recovery simulations")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output file (default: stdout)")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto")
    run.add_argument("--trials", type=int, default=None, help="override the trial count")
    run.add_argument("--trace", default=None, help="write cooperative scan records (JSON)")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config")

    mat = sub.add_parser("matrix", help="sensing matrix utilities")
    mat_sub = mat.add_subparsers(dest="matrix_command", required=True)
    dump = mat_sub.add_parser("dump", help="export a sensing matrix (row-major)")
    dump.add_argument("--config", default=None, help="take the profile from this config")
    dump.add_argument("--bands", type=int, default=200, help="bands of a single-block profile")
    dump.add_argument("--m", type=int, required=True)
    dump.add_argument("--design", choices=("uniform", "nonuniform"), default="uniform")
    dump.add_argument("--seed", type=int, default=0)
    dump.add_argument("--out", required=True)
    dump.add_argument("--format", choices=("csv", "npy"), default="csv")

    fig = sub.add_parser("figures", help="run the three canned figure configs")
    fig.add_argument("--out", default=".", help="output directory")
    fig.add_argument("--format", choices=("csv", "json"), default="csv")
    fig.add_argument("--threads", type=int, default=1)
    fig.add_argument("--seed", type=int, default=None)
    fig.add_argument("--trials", type=int, default=None, help="override the trial count")
    return p


def _with_trials(cfg, trials):
    if trials is None:
        return cfg
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    return cfg.with_overrides(trials=trials)


def _run(args) -> int:
    cfg = _with_trials(load_config(args.config, args.seed), args.trials)
    trace = [] if args.trace else None
    table = run_experiment(cfg, threads=args.threads, trace=trace)
    if args.out:
        emit_results(table, args.out, args.format)
    else:
        sys.stdout.write(format_results(table, args.format))
    if trace is not None:
        Path(args.trace).write_text(json.dumps(trace, indent=1) + "\n")
    return 0


def _dump(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        if cfg.profile is None:
            raise ConfigError("profile", "config has no profile")
        profile = cfg.profile
    else:
        profile = OccupancyProfile.from_blocks([args.bands], [0.1])
    ens = build_sensing_matrix(args.m, profile, args.design, np.random.default_rng(args.seed))
    dump_matrix(ens, args.out, args.format)
    return 0


def _figures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in FIGURE_CONFIGS:
        cfg = _with_trials(load_config(canned_config(name), args.seed), args.trials)
        table = run_experiment(cfg, threads=args.threads)
        target = out / (Path(name).stem + "." + args.format)
        emit_results(table, target, args.format)
        print(f"{target}: {len(table)} rows", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        if args.command == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.experiment}, {len(cfg.sweep)} sweep points, {cfg.trials} trials")
            return 0
        if args.command == "matrix":
            return _dump(args)
        return _figures(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"wcsr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
