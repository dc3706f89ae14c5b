"""Synthetic mixed image/video request traces."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence

import numpy as np

from .errors import InvalidConfig, ParseError
from .profile import (
    IMAGE_RESOLUTIONS,
    VIDEO_RESOLUTIONS,
    Kind,
    LatencyProfile,
    ResolutionClass,
    offline_e2e_latency,
)

VIDEO_FRAME_COUNTS = (41, 81)
DEADLINE_FACTOR = 1.5

MIXES = {"light": 0.2, "balanced": 0.5, "heavy": 0.8}

TRACE_KEYS = ("id", "kind", "resolution", "frames", "arrival_ms", "deadline_ms", "steps_total")


@dataclass(frozen=True)
class Request:
    id: int
    kind: Kind
    resolution: ResolutionClass
    frames: int
    arrival_ms: float
    deadline_ms: float
    steps_total: int
    prompt_tag: str = ""

    @property
    def is_video(self) -> bool:
        return self.kind is Kind.VIDEO

    def check(self) -> None:
        if self.kind is Kind.IMAGE:
            if self.frames != 1:
                raise InvalidConfig(f"image request {self.id} must have frames=1")
            if self.resolution not in IMAGE_RESOLUTIONS:
                raise InvalidConfig(f"image request {self.id} has video-only resolution {self.resolution.value}")
        else:
            if self.frames not in VIDEO_FRAME_COUNTS:
                raise InvalidConfig(f"video request {self.id} frames must be one of {VIDEO_FRAME_COUNTS}")
            if self.resolution not in VIDEO_RESOLUTIONS:
                raise InvalidConfig(f"video request {self.id} has image-only resolution {self.resolution.value}")
        if not self.deadline_ms > self.arrival_ms:
            raise InvalidConfig(f"request {self.id}: deadline must follow arrival")


@dataclass(frozen=True)
class TraceConfig:
    n_requests: int = 100
    video_ratio: float = 0.5
    arrival: str = "poisson"  # poisson | bursty
    rate_per_min: float = 24.0
    burst_width_ms: float = 10_000.0
    burst_gap_ms: float = 50_000.0
    resolution_dist: str = "uniform"  # uniform | dirichlet
    dirichlet_alpha: float = 1.0
    sigma: float = 1.0
    frames: int = 81
    seed: int = 0

    def validate(self) -> "TraceConfig":
        if self.n_requests < 0:
            raise InvalidConfig("must be >= 0", "n_requests")
        if not 0.0 <= self.video_ratio <= 1.0:
            raise InvalidConfig("must lie in [0, 1]", "video_ratio")
        if self.arrival not in ("poisson", "bursty"):
            raise InvalidConfig("must be 'poisson' or 'bursty'", "arrival")
        if not self.rate_per_min > 0:
            raise InvalidConfig("must be > 0", "rate_per_min")
        if self.arrival == "bursty" and not (self.burst_width_ms > 0 and self.burst_gap_ms >= 0):
            raise InvalidConfig("burst width must be > 0 and gap >= 0", "burst_width_ms")
        if self.resolution_dist not in ("uniform", "dirichlet"):
            raise InvalidConfig("must be 'uniform' or 'dirichlet'", "resolution_dist")
        if not self.dirichlet_alpha > 0:
            raise InvalidConfig("must be > 0", "dirichlet_alpha")
        if not self.sigma > 0:
            raise InvalidConfig("must be > 0", "sigma")
        if self.frames not in VIDEO_FRAME_COUNTS:
            raise InvalidConfig(f"must be one of {VIDEO_FRAME_COUNTS}", "frames")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "TraceConfig":
        doc = dict(doc)
        if "mix" in doc:
            mix = doc.pop("mix")
            doc["video_ratio"] = MIXES[mix] if isinstance(mix, str) else float(mix)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise InvalidConfig(f"unknown keys {unknown}", "trace")
        return cls(**doc).validate()


def poisson_arrivals(rng: np.random.Generator, n: int, rate_per_min: float) -> np.ndarray:
    mean_gap = 60_000.0 / rate_per_min
    return np.cumsum(rng.exponential(mean_gap, size=n))


def bursty_arrivals(rng: np.random.Generator, n: int, rate_per_min: float,
                    width_ms: float, gap_ms: float) -> np.ndarray:
    """Busy windows of ``width_ms`` separated by silent ``gap_ms`` gaps.

    The long-run rate equals ``rate_per_min``; inside a window arrivals are
    Poisson at the compressed rate ``rate * (width + gap) / width``.
    """
    busy_rate = rate_per_min * (width_ms + gap_ms) / width_ms
    busy_time = poisson_arrivals(rng, n, busy_rate)
    cycle = np.floor(busy_time / width_ms)
    offset = busy_time - cycle * width_ms
    return cycle * (width_ms + gap_ms) + offset


def burst_windows(cfg: TraceConfig, horizon_ms: float):
    """(start, end) of every busy window up to ``horizon_ms``."""
    period = cfg.burst_width_ms + cfg.burst_gap_ms
    k = 0
    out = []
    while k * period <= horizon_ms:
        out.append((k * period, k * period + cfg.burst_width_ms))
        k += 1
    return out


def _resolution_probs(rng: np.random.Generator, cfg: TraceConfig) -> np.ndarray:
    if cfg.resolution_dist == "uniform":
        return np.full(3, 1.0 / 3.0)
    return rng.dirichlet([cfg.dirichlet_alpha] * 3)


def generate_trace(cfg: TraceConfig, profile: LatencyProfile) -> List[Request]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_requests
    is_video = rng.random(n) < cfg.video_ratio
    if cfg.arrival == "poisson":
        arrivals = poisson_arrivals(rng, n, cfg.rate_per_min)
    else:
        arrivals = bursty_arrivals(rng, n, cfg.rate_per_min, cfg.burst_width_ms, cfg.burst_gap_ms)
    video_p = _resolution_probs(rng, cfg)
    image_p = _resolution_probs(rng, cfg)
    video_idx = rng.choice(3, size=n, p=video_p)
    image_idx = rng.choice(3, size=n, p=image_p)

    requests = []
    for i in range(n):
        if is_video[i]:
            kind, res, frames = Kind.VIDEO, VIDEO_RESOLUTIONS[video_idx[i]], cfg.frames
            steps = profile.video_steps_total
        else:
            kind, res, frames = Kind.IMAGE, IMAGE_RESOLUTIONS[image_idx[i]], 1
            steps = profile.image_steps_total
        requests.append(Request(
            id=i, kind=kind, resolution=res, frames=frames,
            arrival_ms=float(arrivals[i]), deadline_ms=float("inf"), steps_total=steps,
        ))
    return assign_deadlines(requests, cfg.sigma, profile)


def deadline_budget(req: Request, sigma: float, profile: LatencyProfile) -> float:
    return sigma * DEADLINE_FACTOR * offline_e2e_latency(profile, req.kind, req.resolution, req.frames)


def assign_deadlines(requests: Iterable[Request], sigma: float, profile: LatencyProfile) -> List[Request]:
    return [replace(r, deadline_ms=r.arrival_ms + deadline_budget(r, sigma, profile)) for r in requests]


# -- trace files: one JSON object per line ----------------------------------


def request_to_json(r: Request) -> str:
    doc = {
        "id": r.id,
        "kind": r.kind.value,
        "resolution": r.resolution.value,
        "frames": r.frames,
        "arrival_ms": r.arrival_ms,
        "deadline_ms": r.deadline_ms,
        "steps_total": r.steps_total,
    }
    if r.prompt_tag:
        doc["prompt_tag"] = r.prompt_tag
    return json.dumps(doc)


def save_trace(trace: Sequence[Request], path) -> None:
    with open(path, "w") as fh:
        for r in trace:
            fh.write(request_to_json(r) + "\n")


def load_trace(path) -> List[Request]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=lineno) from None
            if not isinstance(doc, dict):
                raise ParseError("expected a JSON object", line=lineno)
            missing = [k for k in TRACE_KEYS if k not in doc]
            if missing:
                raise ParseError(f"missing keys {missing}", line=lineno)
            try:
                req = Request(
                    id=int(doc["id"]),
                    kind=Kind(doc["kind"]),
                    resolution=ResolutionClass.parse(doc["resolution"]),
                    frames=int(doc["frames"]),
                    arrival_ms=float(doc["arrival_ms"]),
                    deadline_ms=float(doc["deadline_ms"]),
                    steps_total=int(doc["steps_total"]),
                    prompt_tag=str(doc.get("prompt_tag", "")),
                )
            except (TypeError, ValueError, KeyError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            out.append(req)
    return out


def trace_summary(trace: Sequence[Request]) -> dict:
    n_video = sum(r.is_video for r in trace)
    return {"n": len(trace), "videos": n_video, "images": len(trace) - n_video}

