"""Deadline slack, preemption victim ranking and the resume triggers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

from ..profile import LatencyProfile
from ..simcore.state import VideoPhase, VideoRuntimeState

BUDGET_TIGHT = "budget_tight"
IDLE = "idle"


def eq3_slack(deadline_ms: float, now_ms: float, steps_remaining: int, step_ms: float) -> float:
    """Deadline minus now minus the remaining denoising work, nothing else."""
    return deadline_ms - now_ms - steps_remaining * step_ms


def current_sp(v: VideoRuntimeState, profile: LatencyProfile) -> int:
    if v.sp_degree:
        return v.sp_degree
    return profile.reference_sp(v.request.resolution)


def finish_time(v: VideoRuntimeState, now_ms: float, profile: LatencyProfile, sp: Optional[int] = None,
                *, include_vae: bool = True, start_ms: Optional[float] = None, overhead_ms: float = 0.0) -> float:
    """Projected completion of ``v`` if it runs at ``sp`` from ``start_ms`` (default: as soon as possible).

    A video in the middle of a step finishes that step at its current degree
    first; a queued video still owes its text-encode stage.
    """
    req = v.request
    p = sp or current_sp(v, profile)
    step = profile.video_step_ms(req.resolution, req.frames, p)
    remaining = v.steps_remaining
    t = now_ms if start_ms is None else start_ms
    if v.phase is VideoPhase.DENOISING and not v.at_boundary and v.next_boundary_ms is not None and start_ms is None:
        t = v.next_boundary_ms
        remaining -= 1
    elif v.phase is VideoPhase.QUEUED:
        t += profile.text_encode
    t += overhead_ms + remaining * step
    if include_vae:
        t += profile.vae_ms(req.resolution, req.frames)
    return t


def compute_slack(video: VideoRuntimeState, now_ms: float, profile: LatencyProfile, sp: Optional[int] = None,
                  include_vae: bool = True) -> float:
    """D - now - remaining runtime under the current (or proposed) SP degree."""
    if video.phase is VideoPhase.DONE:
        raise ValueError("video already finished")
    if video.phase is VideoPhase.VAE:
        return video.deadline_ms - (video.next_boundary_ms or now_ms)
    return video.deadline_ms - finish_time(video, now_ms, profile, sp, include_vae=include_vae)


def switch_overhead_ms(profile: LatencyProfile, old_sp: int, new_sp: int) -> float:
    return profile.pause_ms(old_sp) + profile.resume_ms(new_sp)


def preemption_slack(video: VideoRuntimeState, now_ms: float, profile: LatencyProfile) -> float:
    """Slack left after paying for one pause/resume cycle at the current degree."""
    p = current_sp(video, profile)
    return compute_slack(video, now_ms, profile) - switch_overhead_ms(profile, p, p)


def select_victims(running: Iterable[VideoRuntimeState], gpus_needed: int, now_ms: float,
                   profile: LatencyProfile) -> List[VideoRuntimeState]:
    """Highest-slack running videos first, positive slack only, until enough GPUs would free up."""
    if gpus_needed <= 0:
        return []
    ranked = []
    for v in running:
        if v.phase is not VideoPhase.DENOISING or v.steps_remaining <= 0:
            continue
        s = preemption_slack(v, now_ms, profile)
        if s > 0:
            ranked.append((-s, v.id, v))
    ranked.sort(key=lambda t: (t[0], t[1]))
    victims, freed = [], 0
    for _, _, v in ranked:
        if freed >= gpus_needed:
            break
        victims.append(v)
        freed += len(v.gpu_set)
    return victims


@dataclass
class ResumePolicy:
    safety_margin_steps: float = 1.0
    idle_window_steps: float = 2.0
    # Overrides the step-based idle window when set.
    idle_window_ms: Optional[float] = None
    budget_tight: bool = True
    idle: bool = True


@dataclass
class ResumeDecision:
    triggers: Dict[int, str] = field(default_factory=dict)
    wake_at_ms: Optional[float] = None


def best_degree(free_gpus: int, degrees: Sequence[int]) -> Optional[int]:
    fits = [p for p in degrees if p <= free_gpus]
    return max(fits) if fits else None


def resume_need_ms(v: VideoRuntimeState, profile: LatencyProfile, p_best: int, policy: ResumePolicy) -> float:
    req = v.request
    p_now = current_sp(v, profile)
    margin = policy.safety_margin_steps * profile.video_step_ms(req.resolution, req.frames, p_now)
    return (v.steps_remaining * profile.video_step_ms(req.resolution, req.frames, p_best)
            + profile.vae_ms(req.resolution, req.frames)
            + switch_overhead_ms(profile, p_now, p_best)
            + margin)


def idle_window(v: VideoRuntimeState, profile: LatencyProfile, policy: ResumePolicy) -> float:
    if policy.idle_window_ms is not None:
        return policy.idle_window_ms
    req = v.request
    return policy.idle_window_steps * profile.video_step_ms(req.resolution, req.frames, current_sp(v, profile))


def resume_check(paused_videos: Iterable[VideoRuntimeState], queued_images: Sequence, now_ms: float,
                 profile: LatencyProfile, policy: ResumePolicy, *, free_gpus: int,
                 last_image_arrival_ms: Optional[float], degrees: Optional[Sequence[int]] = None) -> ResumeDecision:
    """Which paused videos must (budget-tight) or may (idle) resume this round.

    Also reports the earliest future instant at which a trigger would fire
    with the current free-GPU count, so the caller can ask for a wake-up.
    """
    degrees = degrees or profile.valid_sp_degrees
    out = ResumeDecision()
    wakes = []
    p_best = best_degree(free_gpus, degrees)
    for v in paused_videos:
        p = p_best or current_sp(v, profile)
        if policy.budget_tight:
            tight_at = v.deadline_ms - resume_need_ms(v, profile, p, policy)
            if now_ms >= tight_at:
                out.triggers[v.id] = BUDGET_TIGHT
                continue
            wakes.append(tight_at)
        if policy.idle:
            window = idle_window(v, profile, policy)
            since = -float("inf") if last_image_arrival_ms is None else last_image_arrival_ms
            if now_ms - since >= window:
                if free_gpus > 0 and not queued_images:
                    out.triggers[v.id] = IDLE
            else:
                wakes.append(since + window)
    future = [t for t in wakes if t > now_ms]
    out.wake_at_ms = min(future) if future else None
    return out
