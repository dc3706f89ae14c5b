"""Command-line entry point.

    diffsched run --config exp.json --out results/
    diffsched sweep --config exp.json --jobs 4
    diffsched ablate --config exp.json
    diffsched dedicated --config exp.json
    diffsched gen-trace --config exp.json --out trace.jsonl
    diffsched validate-profile profile.json

Exit codes: 0 success, 2 configuration error, 3 scheduler contract violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import DiffSchedError, InvalidConfig, ParseError, SchedulerContractViolation, SchemaError, UnknownConfiguration
from .experiments import (
    ExperimentConfig,
    RunSpec,
    ablation_run,
    build_trace,
    dedicated_run,
    load_config,
    point_seed,
    run_experiment,
    sweep,
)
from .profile import load_profile
from .workload import MIXES, save_trace, trace_summary

log = logging.getLogger("diffsched")

EXIT_OK, EXIT_CONFIG, EXIT_CONTRACT = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory (file for gen-trace)")
    common.add_argument("--seed", type=int, action="append", help="seed; repeat for several")
    common.add_argument("--scheduler", help="genserve, fcfs, sjf, srtf or rasp")
    common.add_argument("--sigma", type=float, action="append", help="SLO scale; repeat to sweep")
    common.add_argument("--rate", type=float, action="append", help="arrivals per minute; repeat to sweep")
    common.add_argument("--mix", choices=sorted(MIXES), action="append", help="image/video mix; repeat to sweep")
    common.add_argument("--jobs", type=int, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="diffsched", description="Simulate image/video diffusion co-serving schedulers.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="one scheduler on the configured point(s)")
    sub.add_parser("sweep", parents=[common], help="every scheduler across the sweep axes")
    sub.add_parser("ablate", parents=[common], help="mechanism ablation: fcfs, +preemption, +dp, +sp")
    sub.add_parser("dedicated", parents=[common], help="dedicated GPU splits vs replicated co-serving")
    sub.add_parser("gen-trace", parents=[common], help="write the configured trace as JSON lines")
    vp = sub.add_parser("validate-profile", help="check a latency profile file")
    vp.add_argument("profile", nargs="?", help="profile JSON (default: the shipped profile)")
    vp.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    over = {}
    if args.out:
        over["out"] = args.out
    if args.seed:
        over["seeds"] = tuple(args.seed)
    if args.scheduler:
        over["scheduler"] = args.scheduler
    if args.sigma:
        over["sigmas"] = tuple(args.sigma)
    if args.rate:
        over["rates"] = tuple(args.rate)
    if args.mix:
        over["mixes"] = tuple(args.mix)
    if args.jobs:
        over["jobs"] = args.jobs
    return replace(cfg, **over).validate()


def _gen_trace(cfg: ExperimentConfig, out) -> int:
    profile = cfg.load_profile()
    sigma, rate, ratio = cfg.grid()[0]
    seed = cfg.seeds[0]
    spec = RunSpec(cfg.scheduler, sigma, rate, ratio, seed, 0, "")
    trace = build_trace(cfg, profile, spec)
    path = Path(out or "trace.jsonl")
    save_trace(trace, path)
    log.info("wrote %s (seed %d)", path, point_seed(seed, 0))
    print(json.dumps(trace_summary(trace)))
    return EXIT_OK


def _summarise(labelled) -> None:
    for spec, rep in labelled:
        img = "-" if rep.sar_image is None else f"{rep.sar_image:.3f}"
        vid = "-" if rep.sar_video is None else f"{rep.sar_video:.3f}"
        print(f"{spec.subdir}: sar={rep.sar_overall:.3f} image={img} video={vid}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "validate-profile":
            prof = load_profile(args.profile)
            print(f"ok: {len(prof.video_step_table)} video shapes, {len(prof.image_e2e_table)} image entries")
            return EXIT_OK
        cfg = config_from_args(args)
        if args.command == "gen-trace":
            return _gen_trace(cfg, args.out)
        if args.command == "run":
            _summarise(run_experiment(cfg))
        elif args.command == "sweep":
            _summarise(sweep(cfg))
        elif args.command == "ablate":
            _summarise(ablation_run(cfg))
        elif args.command == "dedicated":
            for label, labelled in dedicated_run(cfg).items():
                print(f"[{label}]")
                _summarise(labelled)
        return EXIT_OK
    except (InvalidConfig, ParseError, SchemaError, UnknownConfiguration, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchedulerContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except DiffSchedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
