"""Per-video action candidates, each anchored to concrete GPUs."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

from ..profile import LatencyProfile
from ..simcore.state import VideoPhase, VideoRuntimeState
from .slack import current_sp, finish_time, preemption_slack, switch_overhead_ms


class CandidateAction(IntEnum):
    # value doubles as the tie-break rank
    HOLD = 0
    CONTINUE = 1
    SCALE_DOWN = 2
    SCALE_UP = 3
    RESUME = 4


@dataclass(frozen=True)
class VideoCandidate:
    video_id: int
    action: CandidateAction
    gpu_set: Tuple[int, ...]
    laxity_ms: float
    score: float
    recoverable: bool

    @property
    def gpu_cost(self) -> int:
        return len(self.gpu_set)

    @property
    def sp(self) -> int:
        return len(self.gpu_set)

    @property
    def mask(self) -> int:
        m = 0
        for g in self.gpu_set:
            m |= 1 << g
        return m


def video_score(laxity_ms: float) -> float:
    return 1.0 / (1.0 + abs(laxity_ms) / 1000.0)


def make_candidate(vid: int, action: CandidateAction, gpus, laxity_ms: float) -> VideoCandidate:
    return VideoCandidate(vid, action, tuple(sorted(gpus)), laxity_ms, video_score(laxity_ms), laxity_ms >= 0)


def hold_laxity(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile) -> float:
    """Laxity if the video waits one round (one step at its current degree) and then runs at that degree."""
    req = v.request
    p = current_sp(v, profile)
    step = profile.video_step_ms(req.resolution, req.frames, p)
    if v.phase is VideoPhase.DENOISING:
        base = v.next_boundary_ms if not v.at_boundary and v.next_boundary_ms is not None else now_ms
        remaining = v.steps_remaining - (0 if v.at_boundary else 1)
        restart = base + step
        done = restart + switch_overhead_ms(profile, p, p) + remaining * step
        return v.deadline_ms - (done + profile.vae_ms(req.resolution, req.frames))
    overhead = switch_overhead_ms(profile, p, p) if v.phase is VideoPhase.PAUSED else 0.0
    done = finish_time(v, now_ms, profile, p, start_ms=now_ms + step, overhead_ms=overhead)
    return v.deadline_ms - done


def hold_candidate(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, force_unrecoverable=False,
                   reserve_ms: float = 0.0) -> VideoCandidate:
    lax = hold_laxity(v, now_ms, profile) - reserve_ms
    rec = lax >= 0 and not force_unrecoverable
    return VideoCandidate(v.id, CandidateAction.HOLD, (), lax, 0.0, rec)


def running_candidates(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, free: Sequence[int],
                       degrees: Sequence[int], *, allow_hold: bool = True, scaling: bool = True,
                       reserve_ms: float = 0.0) -> List[VideoCandidate]:
    p = v.sp_degree
    due = v.deadline_ms - reserve_ms
    out = []
    if allow_hold and preemption_slack(v, now_ms, profile) > 0:
        out.append(hold_candidate(v, now_ms, profile, reserve_ms=reserve_ms))
    out.append(make_candidate(v.id, CandidateAction.CONTINUE, v.gpu_set, due - finish_time(v, now_ms, profile)))
    if not scaling or not v.at_boundary:
        return out
    lower = [q for q in degrees if q < p]
    if lower:
        q = max(lower)
        gpus = sorted(v.gpu_set)[:q]
        over = profile.sp_reconfig_overhead + profile.resume_ms(q)
        done = finish_time(v, now_ms, profile, q, overhead_ms=over)
        out.append(make_candidate(v.id, CandidateAction.SCALE_DOWN, gpus, due - done))
    higher = [q for q in degrees if q > p]
    if higher:
        q = min(higher)
        extra = q - p
        if len(free) >= extra:
            gpus = list(v.gpu_set) + sorted(free)[:extra]
            over = profile.sp_reconfig_overhead + profile.resume_ms(q)
            done = finish_time(v, now_ms, profile, q, overhead_ms=over)
            out.append(make_candidate(v.id, CandidateAction.SCALE_UP, gpus, due - done))
    return out


def anchor_block(free: Sequence[int], p: int, cursor: int) -> Tuple[int, ...]:
    """``p`` consecutive entries of the free list starting at ``cursor`` (wrapping back to fit)."""
    n = len(free)
    if p > n:
        raise ValueError("not enough free GPUs")
    start = cursor % n if n else 0
    if start + p > n:
        start = n - p
    return tuple(free[start:start + p])


def start_degrees(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, n_free: int,
                  degrees: Sequence[int], reserve_ms: float = 0.0, floor: int = 1) -> List[int]:
    """Up to two degrees to offer: the cheapest one that still meets the deadline and the fastest that fits.

    Degrees below ``floor`` are never offered (unless nothing in ``degrees`` reaches it).
    """
    if any(p >= floor for p in degrees):
        degrees = [p for p in degrees if p >= floor]
    fits = [p for p in degrees if p <= n_free]
    if not fits:
        return []
    fastest = max(fits)
    cheapest = None
    for p in fits:
        if v.deadline_ms - reserve_ms - start_finish(v, now_ms, profile, p) >= 0:
            cheapest = p
            break
    if cheapest is None:
        lower = [p for p in fits if p < fastest]
        return [max(lower), fastest] if lower else [fastest]
    return sorted({cheapest, fastest})


def start_finish(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, p: int) -> float:
    overhead = 0.0
    if v.phase is VideoPhase.PAUSED:
        old = current_sp(v, profile)
        overhead = switch_overhead_ms(profile, old, p)
        if p != old:
            overhead += profile.sp_reconfig_overhead
    return finish_time(v, now_ms, profile, p, overhead_ms=overhead)


def waiting_candidates(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, free: Sequence[int],
                       degrees: Sequence[int], cursor: int = 0, *, offer_start: bool = True,
                       force_unrecoverable_hold: bool = False, reserve_ms: float = 0.0,
                       floor: int = 1) -> List[VideoCandidate]:
    out = [hold_candidate(v, now_ms, profile, force_unrecoverable_hold, reserve_ms)]
    if not offer_start:
        return out
    due = v.deadline_ms - reserve_ms
    for p in start_degrees(v, now_ms, profile, len(free), degrees, reserve_ms, floor):
        gpus = anchor_block(free, p, cursor)
        out.append(make_candidate(v.id, CandidateAction.RESUME, gpus, due - start_finish(v, now_ms, profile, p)))
    return out


def gen_video_candidates(video: VideoRuntimeState, snapshot, profile: LatencyProfile,
                         degrees: Optional[Sequence[int]] = None) -> List[VideoCandidate]:
    """Candidate set for one video against a snapshot, anchored at the front of the free list."""
    degrees = degrees or snapshot.sp_degrees
    free = [g for g in snapshot.free_gpus if g in set(snapshot.video_gpus)]
    now = snapshot.now_ms
    if video.phase is VideoPhase.DENOISING:
        return running_candidates(video, now, profile, free, degrees)
    if video.phase in (VideoPhase.QUEUED, VideoPhase.PAUSED):
        return waiting_candidates(video, now, profile, free, degrees)
    raise ValueError(f"no candidates for a video in phase {video.phase.value}")
