"""Experiment configuration, scheduler factory and the sweep/ablation/partition runners."""
from __future__ import annotations

import hashlib
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import POLICIES, BaselinePolicyConfig, BaselineScheduler
from .errors import InvalidConfig
from .genserve.scheduler import GenServeConfig, GenServeScheduler, PreemptionOnlyScheduler
from .genserve.slack import ResumePolicy
from .metrics import (
    REPORT_COLUMNS,
    Report,
    cdf_csv,
    compare,
    compute_report,
    emit_comparison,
    records_csv,
    report_json,
    rows_to_csv,
)
from .profile import LatencyProfile, default_profile, load_profile
from .simcore.engine import SimConfig, run
from .simcore.state import SimResult
from .workload import MIXES, TraceConfig, assign_deadlines, generate_trace, load_trace

SCHEDULERS = ("genserve",) + POLICIES
ABLATION_VARIANTS = ("fcfs", "+preemption", "+dp", "+sp")
DEDICATED_PARTITIONS = ((2, 6), (3, 5), (4, 4))
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
ABLATION_FLAGS = ("preemption", "dp_solver", "sp_switching", "batching")


def point_seed(seed: int, point_index: int) -> int:
    """Stable per-trace seed: first 8 bytes of sha256("<seed>:<point_index>")."""
    digest = hashlib.sha256(f"{seed}:{point_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass
class ExperimentConfig:
    cluster_size: int = 8
    profile: Optional[str] = None
    trace: TraceConfig = field(default_factory=TraceConfig)
    trace_path: Optional[str] = None
    scheduler: str = "genserve"
    schedulers: Tuple[str, ...] = SCHEDULERS
    policy: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    sigmas: Tuple[float, ...] = ()
    rates: Tuple[float, ...] = ()
    mixes: Tuple[str, ...] = ()
    seeds: Tuple[int, ...] = (0,)
    out: str = "results"
    partition: Optional[Tuple[int, int]] = None
    jobs: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.cluster_size < 1:
            raise InvalidConfig("must be >= 1", "cluster_size")
        for i, s in enumerate(self.schedulers):
            if s not in SCHEDULERS and s not in ABLATION_VARIANTS:
                raise InvalidConfig(f"unknown scheduler {s!r}", f"schedulers[{i}]")
        if self.scheduler not in SCHEDULERS and self.scheduler not in ABLATION_VARIANTS:
            raise InvalidConfig(f"unknown scheduler {self.scheduler!r}", "scheduler")
        for k in self.ablation:
            if k not in ABLATION_FLAGS:
                raise InvalidConfig(f"unknown flag {k!r}", f"ablation.{k}")
        for i, m in enumerate(self.mixes):
            if m not in MIXES:
                raise InvalidConfig(f"unknown mix {m!r}", f"sweep.mix[{i}]")
        for i, s in enumerate(self.sigmas):
            if not s > 0:
                raise InvalidConfig("must be > 0", f"sweep.sigma[{i}]")
        for i, r in enumerate(self.rates):
            if not r > 0:
                raise InvalidConfig("must be > 0", f"sweep.rate[{i}]")
        if self.partition is not None:
            img, vid = self.partition
            if img < 0 or vid < 1 or img + vid != self.cluster_size:
                raise InvalidConfig(f"{img}:{vid} must sum to cluster_size {self.cluster_size}", "partition")
        if not self.seeds:
            raise InvalidConfig("need at least one seed", "seeds")
        if self.jobs < 1:
            raise InvalidConfig("must be >= 1", "jobs")
        self.trace.validate()
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise InvalidConfig("config must be a JSON object")
        doc = dict(doc)
        known = set(cls.__dataclass_fields__) | {"sweep"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise InvalidConfig(f"unknown keys {unknown}", "config")
        trace = doc.pop("trace", {})
        if isinstance(trace, str):
            doc["trace_path"] = trace
            trace = {}
        try:
            doc["trace"] = TraceConfig.from_dict(trace)
        except TypeError as exc:
            raise InvalidConfig(str(exc), "trace") from None
        sweep = doc.pop("sweep", {}) or {}
        for key, name in (("sigma", "sigmas"), ("rate", "rates"), ("mix", "mixes")):
            if key in sweep:
                doc[name] = tuple(sweep.pop(key))
        if sweep:
            raise InvalidConfig(f"unknown keys {sorted(sweep)}", "sweep")
        if "schedulers" in doc:
            doc["schedulers"] = tuple(doc["schedulers"])
        if "seeds" in doc:
            doc["seeds"] = tuple(int(s) for s in doc["seeds"])
        part = doc.get("partition")
        if part in (None, "replicated"):
            doc["partition"] = None
        else:
            try:
                doc["partition"] = parse_partition(part)
            except (TypeError, ValueError):
                raise InvalidConfig(f"cannot parse {part!r}", "partition") from None
        return cls(**doc).validate()

    def load_profile(self) -> LatencyProfile:
        return load_profile(self.profile) if self.profile else default_profile()

    def grid(self) -> List[Tuple[float, float, float]]:
        """(sigma, rate, video_ratio) sweep points, in a fixed order."""
        sigmas = self.sigmas or (self.trace.sigma,)
        rates = self.rates or (self.trace.rate_per_min,)
        mixes = tuple(MIXES[m] for m in self.mixes) or (self.trace.video_ratio,)
        return list(itertools.product(sigmas, rates, mixes))


def parse_partition(value) -> Tuple[int, int]:
    if isinstance(value, str):
        a, b = value.split(":")
        return int(a), int(b)
    a, b = value
    return int(a), int(b)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"line {exc.lineno}: {exc.msg}", str(path)) from None
    return ExperimentConfig.from_dict(doc)


# -- schedulers ---------------------------------------------------------------


def genserve_config(policy: dict, ablation: dict) -> GenServeConfig:
    cfg = GenServeConfig.from_dict(policy) if policy else GenServeConfig()
    for k, v in ablation.items():
        setattr(cfg, k, bool(v))
    return cfg


def make_scheduler(name: str, profile: LatencyProfile, policy: Optional[dict] = None, ablation: Optional[dict] = None):
    policy = dict(policy or {})
    ablation = dict(ablation or {})
    if name == "genserve" or name == "+sp":
        s = GenServeScheduler(profile, genserve_config(policy, ablation))
        if name == "+sp":
            s.name = name
        return s
    if name == "+dp":
        cfg = genserve_config(policy, ablation)
        cfg.sp_switching = False
        return GenServeScheduler(profile, cfg, name="+dp")
    if name == "+preemption":
        resume = policy.get("resume")
        return PreemptionOnlyScheduler(profile, ResumePolicy(**resume) if resume else None)
    if name in POLICIES:
        base = {k: v for k, v in policy.items() if k in ("baseline_video_sp", "rasp_table", "batch_images")}
        return BaselineScheduler(profile, BaselinePolicyConfig.from_dict(dict(base, policy=name)))
    raise InvalidConfig(f"unknown scheduler {name!r}", "scheduler")


# -- running ------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    scheduler: str
    sigma: float
    rate: float
    video_ratio: float
    seed: int
    point_index: int
    subdir: str


def _fmt(x: float) -> str:
    return f"{x:g}"


def point_dir(sigma: float, rate: float, video_ratio: float) -> str:
    mix = next((k for k, v in MIXES.items() if v == video_ratio), _fmt(video_ratio))
    return f"sigma={_fmt(sigma)}_rate={_fmt(rate)}_mix={mix}"


def build_trace(cfg: ExperimentConfig, profile: LatencyProfile, spec: RunSpec):
    if cfg.trace_path:
        return assign_deadlines(load_trace(cfg.trace_path), spec.sigma, profile)
    tc = replace(cfg.trace, sigma=spec.sigma, rate_per_min=spec.rate, video_ratio=spec.video_ratio,
                 seed=point_seed(spec.seed, spec.point_index))
    return generate_trace(tc, profile)


def simulate(cfg: ExperimentConfig, spec: RunSpec, partition=None) -> SimResult:
    profile = cfg.load_profile()
    trace = build_trace(cfg, profile, spec)
    sched = make_scheduler(spec.scheduler, profile, cfg.policy, cfg.ablation)
    sim = SimConfig(n_gpus=cfg.cluster_size, partition=partition, record_events=False)
    return run(trace, profile, sched, sim)


def write_run(result: SimResult, report: Report, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.json").write_text(report_json(report))
    (directory / "report.csv").write_text(rows_to_csv([report.row()], REPORT_COLUMNS))
    (directory / "cdf.csv").write_text(cdf_csv(report))
    (directory / "requests.csv").write_text(records_csv(result))
    # wall-clock numbers differ between runs, so they live apart from the byte-stable files
    (directory / "timing.json").write_text(json.dumps(report.scheduler_time, indent=2, sort_keys=True) + "\n")


def _execute(args):
    cfg, spec, partition = args
    result = simulate(cfg, spec, partition)
    return spec, result, compute_report(result)


def specs_for(cfg: ExperimentConfig, schedulers: Sequence[str], prefix: str = "") -> List[RunSpec]:
    out = []
    for name in schedulers:
        for idx, (sigma, rate, ratio) in enumerate(cfg.grid()):
            for seed in cfg.seeds:
                sub = f"{prefix}{name}/{point_dir(sigma, rate, ratio)}/seed={seed}"
                out.append(RunSpec(name, sigma, rate, ratio, seed, idx, sub))
    return out


def execute(cfg: ExperimentConfig, specs: Sequence[RunSpec], partition=None, out: Optional[Path] = None,
            comparison_name: str = "comparison.csv") -> List[Tuple[RunSpec, Report]]:
    """Run every spec (optionally in worker processes) and write its files; returns reports in spec order."""
    jobs = [(cfg, s, partition) for s in specs]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]
    out = Path(cfg.out) if out is None else out
    labelled = []
    for spec, result, report in results:
        write_run(result, report, out / spec.subdir)
        labelled.append((spec, report))
    emit_comparison(compare([(s.subdir, r) for s, r in labelled]), out / comparison_name)
    return labelled


def run_experiment(cfg: ExperimentConfig) -> List[Tuple[RunSpec, Report]]:
    """The configured scheduler on the configured point(s), every seed."""
    return execute(cfg, specs_for(cfg, [cfg.scheduler]))


def sweep(cfg: ExperimentConfig) -> List[Tuple[RunSpec, Report]]:
    return execute(cfg, specs_for(cfg, cfg.schedulers))


def ablation_run(cfg: ExperimentConfig) -> List[Tuple[RunSpec, Report]]:
    return execute(cfg, specs_for(cfg, ABLATION_VARIANTS), out=Path(cfg.out) / "ablation")


def dedicated_run(cfg: ExperimentConfig, partitions: Sequence[Tuple[int, int]] = DEDICATED_PARTITIONS) -> Dict[str, list]:
    """The configured scheduler under each dedicated split plus the replicated baseline."""
    out = {}
    root = Path(cfg.out) / "dedicated"
    n = cfg.cluster_size
    for part in list(partitions) + [None]:
        if part is not None and part[0] + part[1] != n:
            raise InvalidConfig(f"{part[0]}:{part[1]} must sum to cluster_size {n}", "partition")
        label = "replicated" if part is None else f"{part[0]}-{part[1]}"
        specs = specs_for(cfg, [cfg.scheduler])
        out[label] = execute(cfg, specs, partition=part, out=root / label)
    return out


def median_metric(reports: Sequence[Report], attr: str) -> float:
    vals = [getattr(r, attr) for r in reports]
    vals = [v for v in vals if v is not None]
    return float(np.median(vals)) if vals else float("nan")
