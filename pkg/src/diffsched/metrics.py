"""SLO attainment, latency distributions and report files."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyResult
from .simcore.state import RECORD_COLUMNS, SimResult

KINDS = ("all", "image", "video")
CDF_POINTS = 101
QUANTILES = (("p50", 0.50), ("p90", 0.90), ("p99", 0.99))

# flat column order of report.csv and comparison.csv
REPORT_COLUMNS = (
    "scheduler", "n_requests", "n_images", "n_videos", "met", "met_images", "met_videos",
    "sar_overall", "sar_image", "sar_video",
    "turnaround_p50_ms", "turnaround_p90_ms", "turnaround_p99_ms",
    "image_turnaround_p50_ms", "image_turnaround_p90_ms", "image_turnaround_p99_ms",
    "video_turnaround_p50_ms", "video_turnaround_p90_ms", "video_turnaround_p99_ms",
    "queue_wait_mean_ms", "queue_wait_p99_ms",
    "image_queue_wait_mean_ms", "image_queue_wait_p99_ms",
    "video_queue_wait_mean_ms", "video_queue_wait_p99_ms",
    "pauses", "resumes", "reconfigs", "sp_switch_fraction", "makespan_ms",
)


@dataclass
class Report:
    scheduler: str
    n_requests: int
    n_images: int
    n_videos: int
    met: int
    met_images: int
    met_videos: int
    sar_overall: float
    sar_image: Optional[float]
    sar_video: Optional[float]
    # kind -> {"p50": .., "p90": .., "p99": ..}; kinds without requests are absent
    turnaround: Dict[str, Dict[str, float]]
    # kind -> 101 turnaround values at quantiles 0.00, 0.01, ..., 1.00
    cdf: Dict[str, List[float]]
    # kind -> {"mean": .., "p99": ..}
    queue_wait: Dict[str, Dict[str, float]]
    pauses: int
    resumes: int
    reconfigs: int
    sp_switch_fraction: float
    makespan_ms: float
    # wall-clock figures; never written to the byte-stable files
    scheduler_time: Dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, timing: bool = False) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("scheduler_time")
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "Report":
        doc = dict(doc)
        doc.setdefault("scheduler_time", {})
        return cls(**doc)

    def row(self) -> dict:
        out = {}
        for k in REPORT_COLUMNS:
            if hasattr(self, k):
                out[k] = getattr(self, k)
        for kind, prefix in (("all", ""), ("image", "image_"), ("video", "video_")):
            t = self.turnaround.get(kind, {})
            for q, _ in QUANTILES:
                out[f"{prefix}turnaround_{q}_ms"] = t.get(q)
            w = self.queue_wait.get(kind, {})
            out[f"{prefix}queue_wait_mean_ms"] = w.get("mean")
            out[f"{prefix}queue_wait_p99_ms"] = w.get("p99")
        return {k: out.get(k) for k in REPORT_COLUMNS}


def _sar(met: int, n: int) -> Optional[float]:
    return met / n if n else None


def compute_report(result: SimResult) -> Report:
    recs = result.records
    if not recs:
        raise EmptyResult("simulation produced no requests")
    groups = {
        "all": recs,
        "image": [r for r in recs if r.kind == "image"],
        "video": [r for r in recs if r.kind == "video"],
    }
    grid = np.linspace(0.0, 1.0, CDF_POINTS)
    turnaround, cdf, wait = {}, {}, {}
    for kind in KINDS:
        rs = groups[kind]
        if not rs:
            continue
        ta = np.array([r.turnaround_ms for r in rs], dtype=float)
        qw = np.array([r.queue_wait_ms for r in rs], dtype=float)
        turnaround[kind] = {name: float(np.quantile(ta, q)) for name, q in QUANTILES}
        cdf[kind] = [float(x) for x in np.quantile(ta, grid)]
        wait[kind] = {"mean": float(qw.mean()), "p99": float(np.quantile(qw, 0.99))}
    met = {k: sum(r.met for r in groups[k]) for k in KINDS}
    steps = result.denoise_steps
    switched = sum(r.switched_steps for r in recs)
    walls = result.round_wall_ms
    timing = {}
    if walls:
        timing = {"rounds": len(walls), "mean_ms": float(np.mean(walls)), "max_ms": float(np.max(walls))}
    return Report(
        scheduler=result.scheduler,
        n_requests=len(recs),
        n_images=len(groups["image"]),
        n_videos=len(groups["video"]),
        met=met["all"],
        met_images=met["image"],
        met_videos=met["video"],
        sar_overall=met["all"] / len(recs),
        sar_image=_sar(met["image"], len(groups["image"])),
        sar_video=_sar(met["video"], len(groups["video"])),
        turnaround=turnaround,
        cdf=cdf,
        queue_wait=wait,
        pauses=sum(r.pause_count for r in recs),
        resumes=sum(r.resume_count for r in recs),
        reconfigs=sum(r.reconfig_count for r in recs),
        sp_switch_fraction=switched / steps if steps else 0.0,
        makespan_ms=result.makespan_ms,
        scheduler_time=timing,
    )


def compare(reports: Sequence[Tuple[str, Report]]) -> List[dict]:
    """One row per labelled report, in the order given."""
    if not reports:
        raise ValueError("need at least one report")
    rows = []
    for label, rep in reports:
        row = {"label": label}
        row.update(rep.row())
        rows.append(row)
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def report_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def cdf_csv(report: Report) -> str:
    rows = []
    for kind in KINDS:
        for i, v in enumerate(report.cdf.get(kind, [])):
            rows.append({"kind": kind, "quantile": i / (CDF_POINTS - 1), "turnaround_ms": v})
    return rows_to_csv(rows, ("kind", "quantile", "turnaround_ms"))


def records_csv(result: SimResult) -> str:
    rows = [asdict(r) for r in result.records]
    return rows_to_csv(rows, RECORD_COLUMNS)


def emit(report: Report, fmt: str, path) -> Path:
    if not path:
        raise ValueError("an output path is required")
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = rows_to_csv([report.row()], REPORT_COLUMNS)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    path.write_text(text)
    return path


def emit_comparison(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    path.write_text(rows_to_csv(rows, ("label",) + REPORT_COLUMNS))
    return path


def read_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
