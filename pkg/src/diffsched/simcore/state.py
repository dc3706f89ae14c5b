from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from ..profile import Kind
from ..workload import Request


class VideoPhase(Enum):
    QUEUED = "queued"
    DENOISING = "denoising"
    PAUSED = "paused"
    VAE = "vae"
    DONE = "done"


class Role(Enum):
    VIDEO_SP = "video_sp"
    VIDEO_VAE = "video_vae"
    IMAGE_BATCH = "image_batch"


@dataclass(frozen=True)
class GpuState:
    gpu_id: int
    occupant: Optional[Tuple[int, Role]]
    busy_until_ms: float

    @property
    def free(self) -> bool:
        return self.occupant is None


@dataclass
class VideoRuntimeState:
    request: Request
    steps_done: int = 0
    sp_degree: int = 0
    gpu_set: Tuple[int, ...] = ()
    phase: VideoPhase = VideoPhase.QUEUED
    pause_count: int = 0
    resume_count: int = 0
    reconfig_count: int = 0
    switched_steps: int = 0
    first_start_ms: Optional[float] = None
    next_boundary_ms: Optional[float] = None
    # True between a step boundary and the scheduling round that follows it.
    at_boundary: bool = False
    pending: Optional["Action"] = None
    pending_overhead_ms: float = 0.0
    switch_pending: bool = False
    paused_state_mb: float = 0.0
    paused_at_ms: Optional[float] = None

    @property
    def id(self) -> int:
        return self.request.id

    @property
    def steps_total(self) -> int:
        return self.request.steps_total

    @property
    def steps_remaining(self) -> int:
        return self.request.steps_total - self.steps_done

    @property
    def deadline_ms(self) -> float:
        return self.request.deadline_ms


class ActionKind(Enum):
    START = "start"
    CONTINUE = "continue"
    PAUSE = "pause"
    RESUME = "resume"
    RECONFIGURE = "reconfigure"
    START_BATCH = "start_batch"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    request_ids: Tuple[int, ...]
    gpus: Tuple[int, ...] = ()

    @property
    def video_id(self) -> int:
        return self.request_ids[0]

    @classmethod
    def start(cls, vid: int, gpus) -> "Action":
        return cls(ActionKind.START, (vid,), tuple(sorted(gpus)))

    @classmethod
    def resume(cls, vid: int, gpus) -> "Action":
        return cls(ActionKind.RESUME, (vid,), tuple(sorted(gpus)))

    @classmethod
    def pause(cls, vid: int) -> "Action":
        return cls(ActionKind.PAUSE, (vid,))

    @classmethod
    def keep(cls, vid: int) -> "Action":
        return cls(ActionKind.CONTINUE, (vid,))

    @classmethod
    def reconfigure(cls, vid: int, gpus) -> "Action":
        return cls(ActionKind.RECONFIGURE, (vid,), tuple(sorted(gpus)))

    @classmethod
    def batch(cls, gpu: int, image_ids) -> "Action":
        return cls(ActionKind.START_BATCH, tuple(image_ids), (gpu,))


@dataclass
class Plan:
    round_ms: float
    actions: List[Action] = field(default_factory=list)
    # Ask the engine for another round at this time even if nothing else happens.
    wake_at_ms: Optional[float] = None

    def __len__(self):
        return len(self.actions)


@dataclass(frozen=True)
class ImageBatch:
    batch_id: int
    gpu: int
    request_ids: Tuple[int, ...]
    resolution: object
    start_ms: float
    end_ms: float


@dataclass(frozen=True)
class ClusterSnapshot:
    """Scheduler-visible view at a round boundary. Holds copies only."""

    now_ms: float
    n_gpus: int
    gpu_states: Tuple[GpuState, ...]
    free_gpus: Tuple[int, ...]
    queued_images: Tuple[Request, ...]
    queued_videos: Tuple[VideoRuntimeState, ...]
    running_videos: Tuple[VideoRuntimeState, ...]
    paused_videos: Tuple[VideoRuntimeState, ...]
    vae_videos: Tuple[VideoRuntimeState, ...]
    inflight_batches: Tuple[ImageBatch, ...]
    last_image_arrival_ms: Optional[float]
    image_gpus: Tuple[int, ...]
    video_gpus: Tuple[int, ...]
    sp_degrees: Tuple[int, ...]

    @property
    def dedicated(self) -> bool:
        return set(self.image_gpus) != set(self.video_gpus)

    def free_for(self, kind: Kind) -> Tuple[int, ...]:
        pool = self.video_gpus if kind is Kind.VIDEO else self.image_gpus
        if not self.dedicated:
            return self.free_gpus
        pool = set(pool)
        return tuple(g for g in self.free_gpus if g in pool)

    def videos(self) -> Tuple[VideoRuntimeState, ...]:
        return self.queued_videos + self.running_videos + self.paused_videos

    def video(self, vid: int) -> Optional[VideoRuntimeState]:
        for v in self.videos() + self.vae_videos:
            if v.id == vid:
                return v
        return None

    def occupied_by(self, rid: int) -> Tuple[int, ...]:
        return tuple(g.gpu_id for g in self.gpu_states if g.occupant and g.occupant[0] == rid)


def copy_videos(videos) -> Tuple[VideoRuntimeState, ...]:
    return tuple(copy.copy(v) for v in videos)


@dataclass(frozen=True)
class RequestRecord:
    id: int
    kind: str
    resolution: str
    frames: int
    arrival_ms: float
    deadline_ms: float
    first_start_ms: Optional[float]
    completion_ms: float
    met: bool
    pause_count: int = 0
    resume_count: int = 0
    reconfig_count: int = 0
    steps_total: int = 0
    switched_steps: int = 0

    @property
    def turnaround_ms(self) -> float:
        return self.completion_ms - self.arrival_ms

    @property
    def queue_wait_ms(self) -> float:
        start = self.first_start_ms if self.first_start_ms is not None else self.completion_ms
        return start - self.arrival_ms


RECORD_COLUMNS = (
    "id", "kind", "resolution", "frames", "arrival_ms", "deadline_ms", "first_start_ms",
    "completion_ms", "met", "pause_count", "resume_count", "reconfig_count", "steps_total",
    "switched_steps",
)


@dataclass
class SimResult:
    scheduler: str
    n_gpus: int
    records: List[RequestRecord]
    n_rounds: int = 0
    makespan_ms: float = 0.0
    round_wall_ms: List[float] = field(default_factory=list)
    event_log: List[tuple] = field(default_factory=list)
    unsafe_pauses: int = 0
    invariant_checks: int = 0
    denoise_steps: int = 0

    def by_id(self) -> Dict[int, RequestRecord]:
        return {r.id: r for r in self.records}
