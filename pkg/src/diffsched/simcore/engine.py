"""Deterministic discrete-event engine.

GPUs run three kinds of work: video denoising steps (a set of SP members),
a video's VAE decode (exactly one GPU) and image batches (one GPU). The
pluggable scheduler is consulted once per distinct event timestamp; its
plan is validated before anything changes. Denoising videos can only be
paused or reconfigured at a step boundary: a decision taken while a step is
in flight is parked on the video and applied when that step completes.
"""
from __future__ import annotations

import copy
import heapq
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ..errors import InvalidConfig, SchedulerContractViolation
from ..genserve.slack import preemption_slack
from ..profile import Kind, LatencyProfile
from ..workload import Request
from .state import (
    Action,
    ActionKind,
    ClusterSnapshot,
    GpuState,
    ImageBatch,
    Plan,
    RequestRecord,
    Role,
    SimResult,
    VideoPhase,
    VideoRuntimeState,
    copy_videos,
)

ARRIVAL, STEP, BATCH_DONE, VAE_DONE, IDLE = range(5)
EVENT_NAMES = {ARRIVAL: "arrival", STEP: "step", BATCH_DONE: "batch_done", VAE_DONE: "vae_done", IDLE: "idle"}


@dataclass
class SimConfig:
    n_gpus: int = 8
    # (image GPUs, video GPUs) for a dedicated split; None means every GPU serves both.
    partition: Optional[Tuple[int, int]] = None
    sp_degrees: Optional[Tuple[int, ...]] = None
    idle_tick_ms: float = 1000.0
    max_idle_rounds: int = 20_000
    record_events: bool = True
    check_invariants: bool = True

    def pools(self) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
        every = tuple(range(self.n_gpus))
        if self.partition is None:
            return every, every
        img, vid = self.partition
        if img < 0 or vid < 0 or img + vid != self.n_gpus:
            raise InvalidConfig(f"dedicated split {img}:{vid} must sum to {self.n_gpus}", "partition")
        return every[:img], every[img:]


class Simulator:
    def __init__(self, trace: Sequence[Request], profile: LatencyProfile, scheduler, config: Optional[SimConfig] = None):
        self.config = config or SimConfig()
        self.profile = profile
        self.scheduler = scheduler
        n = self.config.n_gpus
        if n < 1:
            raise InvalidConfig("must be >= 1", "n_gpus")
        self.n_gpus = n
        self.image_pool, self.video_pool = self.config.pools()
        self._image_pool_set = set(self.image_pool)
        self._video_pool_set = set(self.video_pool)
        degrees = self.config.sp_degrees or profile.valid_sp_degrees
        self.sp_degrees = tuple(p for p in sorted(degrees) if p <= len(self.video_pool))
        self.safe_preemption = bool(getattr(scheduler, "safe_preemption", False))

        self.requests: Dict[int, Request] = {}
        last = -float("inf")
        for r in trace:
            if r.id in self.requests:
                raise InvalidConfig(f"duplicate request id {r.id}", "trace")
            if r.arrival_ms < last:
                raise InvalidConfig("trace must be sorted by arrival", "trace")
            last = r.arrival_ms
            self.requests[r.id] = r
        self.trace = list(trace)

        self.now = 0.0
        self._events: List[tuple] = []
        self._seq = 0
        self.occupant: List[Optional[Tuple[int, Role]]] = [None] * n
        self.busy_until = [0.0] * n
        self.videos: Dict[int, VideoRuntimeState] = {}
        self.queued_images: List[Request] = []
        self.batches: Dict[int, ImageBatch] = {}
        self._next_batch = 0
        self.first_start: Dict[int, float] = {}
        self.completion: Dict[int, float] = {}
        self.last_image_arrival: Optional[float] = None
        self.event_log: List[tuple] = []
        self.round_wall_ms: List[float] = []
        self.n_rounds = 0
        self.unsafe_pauses = 0
        self.invariant_checks = 0
        self.denoise_steps = 0
        self._idle_at: set = set()
        self._arrived = 0
        self._steps_seen: Dict[int, int] = {}
        for r in self.trace:
            self._push(r.arrival_ms, ARRIVAL, r.id)

    # -- event queue ---------------------------------------------------------

    def _push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self._events, (t, self._seq, kind, payload))
        self._seq += 1

    def _log(self, *entry) -> None:
        if self.config.record_events:
            self.event_log.append((self.now,) + entry)

    # -- main loop -------------------------------------------------------------

    def run(self) -> SimResult:
        idle_streak = 0
        while self._events:
            t = self._events[0][0]
            self.now = t
            only_idle = True
            while self._events and self._events[0][0] == t:
                _, _, kind, payload = heapq.heappop(self._events)
                if kind != IDLE:
                    only_idle = False
                self._handle(kind, payload)
            if len(self.completion) == len(self.requests):
                if not self._events:
                    break
                continue
            plan = self._round()
            if only_idle and not plan.actions:
                idle_streak += 1
                if idle_streak > self.config.max_idle_rounds:
                    raise SchedulerContractViolation(
                        f"scheduler stalled at t={self.now:.3f} ms with {len(self.requests) - len(self.completion)} "
                        "unfinished requests")
            else:
                idle_streak = 0
            if not self._events and len(self.completion) < len(self.requests):
                self._push_idle(self.now + self.config.idle_tick_ms)
        return self._result()

    def _push_idle(self, t: float) -> None:
        if t not in self._idle_at:
            self._idle_at.add(t)
            self._push(t, IDLE, None)

    def _handle(self, kind: int, payload) -> None:
        if kind == ARRIVAL:
            r = self.requests[payload]
            self._arrived += 1
            if r.kind is Kind.IMAGE:
                self.queued_images.append(r)
                self.last_image_arrival = self.now
            else:
                self.videos[r.id] = VideoRuntimeState(request=r)
            self._log("arrival", r.id)
        elif kind == STEP:
            self._on_step(self.videos[payload])
        elif kind == BATCH_DONE:
            b = self.batches.pop(payload)
            self.occupant[b.gpu] = None
            for rid in b.request_ids:
                self.completion[rid] = self.now
            self._log("batch_done", b.gpu, b.request_ids)
        elif kind == VAE_DONE:
            v = self.videos[payload]
            self._release(v.gpu_set)
            v.gpu_set = ()
            v.phase = VideoPhase.DONE
            self.completion[v.id] = self.now
            self._log("done", v.id)
        else:
            self._idle_at.discard(self.now)

    def _on_step(self, v: VideoRuntimeState) -> None:
        v.steps_done += 1
        self.denoise_steps += 1
        v.next_boundary_ms = None
        self._log("step", v.id, v.steps_done, v.sp_degree)
        if v.steps_done >= v.steps_total:
            keep = v.gpu_set[0]
            self._release(v.gpu_set[1:])
            v.gpu_set = (keep,)
            self.occupant[keep] = (v.id, Role.VIDEO_VAE)
            v.phase = VideoPhase.VAE
            v.pending = None
            end = self.now + self.profile.vae_ms(v.request.resolution, v.request.frames)
            self.busy_until[keep] = end
            v.next_boundary_ms = end
            self._push(end, VAE_DONE, v.id)
            self._log("vae", v.id, keep)
            return
        v.at_boundary = True
        pending, v.pending = v.pending, None
        if pending is not None:
            if pending.kind is ActionKind.PAUSE:
                self._pause(v)
            elif pending.kind is ActionKind.RECONFIGURE:
                self._reconfigure(v, pending.gpus)

    # -- scheduling rounds --------------------------------------------------------

    def snapshot(self) -> ClusterSnapshot:
        gpu_states = tuple(GpuState(g, self.occupant[g], self.busy_until[g]) for g in range(self.n_gpus))
        by_phase: Dict[VideoPhase, list] = {p: [] for p in VideoPhase}
        for vid in sorted(self.videos):
            v = self.videos[vid]
            by_phase[v.phase].append(v)
        return ClusterSnapshot(
            now_ms=self.now,
            n_gpus=self.n_gpus,
            gpu_states=gpu_states,
            free_gpus=tuple(g for g in range(self.n_gpus) if self.occupant[g] is None),
            queued_images=tuple(self.queued_images),
            queued_videos=copy_videos(by_phase[VideoPhase.QUEUED]),
            running_videos=copy_videos(by_phase[VideoPhase.DENOISING]),
            paused_videos=copy_videos(by_phase[VideoPhase.PAUSED]),
            vae_videos=copy_videos(by_phase[VideoPhase.VAE]),
            inflight_batches=tuple(self.batches[b] for b in sorted(self.batches)),
            last_image_arrival_ms=self.last_image_arrival,
            image_gpus=self.image_pool,
            video_gpus=self.video_pool,
            sp_degrees=self.sp_degrees,
        )

    def _round(self) -> Plan:
        snap = self.snapshot()
        t0 = time.perf_counter()
        plan = self.scheduler.schedule(snap)
        self.round_wall_ms.append((time.perf_counter() - t0) * 1000.0)
        self.n_rounds += 1
        if plan is None:
            plan = Plan(round_ms=self.now)
        self.apply_plan(plan)
        if plan.wake_at_ms is not None:
            self._push_idle(max(plan.wake_at_ms, self.now))
        return plan

    def apply_plan(self, plan: Plan) -> None:
        """Validate ``plan`` against the current state, then enact it."""
        now = self.now
        seen = set()
        free = {g for g in range(self.n_gpus) if self.occupant[g] is None}
        released = set()
        acquisitions: List[Tuple[Action, Tuple[int, ...]]] = []
        deferred = []

        def fail(msg):
            raise SchedulerContractViolation(f"t={now:.3f} ms: {msg}")

        for a in plan.actions:
            for rid in a.request_ids:
                if rid in seen:
                    fail(f"request {rid} appears in more than one action")
                seen.add(rid)
            if a.kind is ActionKind.START_BATCH:
                self._check_batch(a, fail)
                acquisitions.append((a, a.gpus))
                continue
            v = self.videos.get(a.video_id)
            if v is None or len(a.request_ids) != 1:
                fail(f"{a.kind.value} names unknown or non-video request {a.request_ids}")
            if a.kind in (ActionKind.START, ActionKind.RESUME):
                want = VideoPhase.QUEUED if a.kind is ActionKind.START else VideoPhase.PAUSED
                if v.phase is not want:
                    fail(f"{a.kind.value} on video {v.id} in phase {v.phase.value}")
                self._check_degree(a.gpus, fail)
                acquisitions.append((a, a.gpus))
                continue
            if v.phase is not VideoPhase.DENOISING:
                fail(f"{a.kind.value} on video {v.id} in phase {v.phase.value}")
            if a.kind is ActionKind.CONTINUE:
                if a.gpus and tuple(sorted(a.gpus)) != v.gpu_set:
                    fail(f"continue for video {v.id} names GPUs {a.gpus}, holds {v.gpu_set}")
                deferred.append(a)
            elif a.kind is ActionKind.PAUSE:
                if preemption_slack(v, now, self.profile) <= 0:
                    if self.safe_preemption:
                        fail(f"video {v.id} selected for pause with non-positive slack")
                    self.unsafe_pauses += 1
                if v.at_boundary:
                    released.update(v.gpu_set)
                deferred.append(a)
            elif a.kind is ActionKind.RECONFIGURE:
                self._check_degree(a.gpus, fail)
                new, old = set(a.gpus), set(v.gpu_set)
                if new == old:
                    fail(f"reconfigure of video {v.id} keeps the same GPU set")
                if v.at_boundary:
                    released.update(old - new)
                    acquisitions.append((a, tuple(sorted(new - old))))
                else:
                    if not new < old:
                        fail(f"mid-step reconfigure of video {v.id} may only shrink its GPU set")
                deferred.append(a)
            else:
                fail(f"unknown action {a.kind}")

        available = free | released
        claimed = set()
        for a, gpus in acquisitions:
            pool = self._image_pool_set if a.kind is ActionKind.START_BATCH else self._video_pool_set
            for g in gpus:
                if not 0 <= g < self.n_gpus:
                    fail(f"GPU {g} does not exist")
                if g not in pool:
                    fail(f"GPU {g} is outside the pool for {a.kind.value}")
                if g not in available:
                    fail(f"GPU {g} is not free for {a.kind.value} {a.request_ids}")
                if g in claimed:
                    fail(f"GPU {g} assigned twice")
                claimed.add(g)

        # releases first, then acquisitions
        for a in deferred:
            v = self.videos[a.video_id]
            if a.kind is ActionKind.CONTINUE:
                v.pending = None
            elif a.kind is ActionKind.PAUSE:
                if v.at_boundary:
                    self._pause(v)
                else:
                    v.pending = a
            elif a.kind is ActionKind.RECONFIGURE and not v.at_boundary:
                v.pending = a
        for a, _ in acquisitions:
            if a.kind is ActionKind.START_BATCH:
                self._start_batch(a)
            elif a.kind is ActionKind.START:
                self._start(self.videos[a.video_id], a.gpus)
            elif a.kind is ActionKind.RESUME:
                self._resume(self.videos[a.video_id], a.gpus)
            else:
                self._reconfigure(self.videos[a.video_id], a.gpus)
        for vid in sorted(self.videos):
            v = self.videos[vid]
            if v.phase is VideoPhase.DENOISING and v.at_boundary:
                self._launch(v)
        if self.config.check_invariants:
            self._check_state()

    def _check_degree(self, gpus, fail) -> None:
        if len(set(gpus)) != len(gpus):
            fail(f"duplicate GPUs in {gpus}")
        if len(gpus) not in self.sp_degrees:
            fail(f"SP degree {len(gpus)} not in {self.sp_degrees}")

    def _check_batch(self, a: Action, fail) -> None:
        if len(a.gpus) != 1:
            fail("an image batch runs on exactly one GPU")
        if not a.request_ids:
            fail("empty image batch")
        if len(a.request_ids) > self.profile.max_image_batch:
            fail(f"batch of {len(a.request_ids)} exceeds max {self.profile.max_image_batch}")
        queued = {r.id for r in self.queued_images}
        res = set()
        for rid in a.request_ids:
            if rid not in queued:
                fail(f"image {rid} is not queued")
            res.add(self.requests[rid].resolution)
        if len(res) != 1:
            fail("an image batch mixes resolutions")

    # -- state transitions ------------------------------------------------------

    def _release(self, gpus) -> None:
        for g in gpus:
            self.occupant[g] = None

    def _occupy(self, v: VideoRuntimeState, gpus) -> None:
        for g in gpus:
            self.occupant[g] = (v.id, Role.VIDEO_SP)

    def _start(self, v: VideoRuntimeState, gpus) -> None:
        v.phase = VideoPhase.DENOISING
        v.gpu_set = tuple(sorted(gpus))
        v.sp_degree = len(gpus)
        v.at_boundary = True
        v.pending_overhead_ms += self.profile.text_encode
        v.first_start_ms = self.now
        self.first_start[v.id] = self.now
        self._occupy(v, gpus)
        self._log("start", v.id, v.gpu_set)

    def _resume(self, v: VideoRuntimeState, gpus) -> None:
        old = v.sp_degree
        new = len(gpus)
        v.phase = VideoPhase.DENOISING
        v.gpu_set = tuple(sorted(gpus))
        v.sp_degree = new
        v.at_boundary = True
        v.resume_count += 1
        v.paused_state_mb = 0.0
        v.paused_at_ms = None
        v.pending_overhead_ms += self.profile.pause_ms(old) + self.profile.resume_ms(new)
        if new != old:
            v.reconfig_count += 1
            v.switch_pending = True
            v.pending_overhead_ms += self.profile.sp_reconfig_overhead
        self._occupy(v, gpus)
        self._log("resume", v.id, v.gpu_set, v.steps_done)

    def _pause(self, v: VideoRuntimeState) -> None:
        if not v.at_boundary:
            raise AssertionError(f"video {v.id} paused in the middle of a step")
        self._release(v.gpu_set)
        v.gpu_set = ()
        v.phase = VideoPhase.PAUSED
        v.at_boundary = False
        v.pending = None
        v.pause_count += 1
        v.paused_at_ms = self.now
        v.paused_state_mb = self.profile.paused_state_mb.get(v.request.resolution, 0.0)
        self._log("pause", v.id, v.steps_done)

    def _reconfigure(self, v: VideoRuntimeState, gpus) -> None:
        new, old = set(gpus), set(v.gpu_set)
        self._release(sorted(old - new))
        self._occupy(v, sorted(new - old))
        v.gpu_set = tuple(sorted(new))
        v.sp_degree = len(new)
        v.reconfig_count += 1
        v.switch_pending = True
        v.pending_overhead_ms += self.profile.sp_reconfig_overhead + self.profile.resume_ms(v.sp_degree)
        self._log("reconfig", v.id, v.gpu_set, v.steps_done)

    def _launch(self, v: VideoRuntimeState) -> None:
        req = v.request
        dur = self.profile.video_step_ms(req.resolution, req.frames, v.sp_degree) + v.pending_overhead_ms
        v.pending_overhead_ms = 0.0
        if v.switch_pending:
            v.switched_steps += 1
            v.switch_pending = False
        v.at_boundary = False
        end = self.now + dur
        v.next_boundary_ms = end
        for g in v.gpu_set:
            self.busy_until[g] = end
        self._push(end, STEP, v.id)

    def _start_batch(self, a: Action) -> None:
        gpu = a.gpus[0]
        members = set(a.request_ids)
        reqs = [r for r in self.queued_images if r.id in members]
        self.queued_images = [r for r in self.queued_images if r.id not in members]
        res = reqs[0].resolution
        end = self.now + self.profile.image_ms(res, len(reqs))
        bid = self._next_batch
        self._next_batch += 1
        self.batches[bid] = ImageBatch(bid, gpu, tuple(a.request_ids), res, self.now, end)
        self.occupant[gpu] = (a.request_ids[0], Role.IMAGE_BATCH)
        self.busy_until[gpu] = end
        for rid in a.request_ids:
            self.first_start[rid] = self.now
        self._push(end, BATCH_DONE, bid)
        self._log("batch", gpu, tuple(a.request_ids))

    def _check_state(self) -> None:
        self.invariant_checks += 1
        owners: Dict[int, int] = {}
        for v in self.videos.values():
            if v.phase is VideoPhase.DENOISING:
                if len(v.gpu_set) not in self.sp_degrees:
                    raise AssertionError(f"video {v.id} runs at illegal degree {len(v.gpu_set)}")
            elif v.phase is VideoPhase.VAE:
                if len(v.gpu_set) != 1:
                    raise AssertionError(f"VAE of video {v.id} spans {len(v.gpu_set)} GPUs")
            elif v.gpu_set:
                raise AssertionError(f"video {v.id} in phase {v.phase.value} holds GPUs")
            for g in v.gpu_set:
                if g in owners:
                    raise AssertionError(f"GPU {g} double-assigned")
                owners[g] = v.id
            if v.steps_done < self._steps_seen.get(v.id, 0):
                raise AssertionError(f"video {v.id} lost denoising progress")
            self._steps_seen[v.id] = v.steps_done
        for b in self.batches.values():
            if b.gpu in owners:
                raise AssertionError(f"GPU {b.gpu} double-assigned")
            owners[b.gpu] = b.request_ids[0]
        for g in range(self.n_gpus):
            occ = self.occupant[g]
            if (occ is None) != (g not in owners) or (occ is not None and occ[0] != owners[g]):
                raise AssertionError(f"GPU {g} occupancy out of sync")
        if len(owners) > self.n_gpus:
            raise AssertionError("capacity exceeded")
        # every arrived request is queued, in service or completed, exactly once
        in_batches = sum(len(b.request_ids) for b in self.batches.values())
        live_videos = sum(1 for v in self.videos.values() if v.phase is not VideoPhase.DONE)
        if len(self.queued_images) + in_batches + live_videos + len(self.completion) != self._arrived:
            raise AssertionError("request conservation violated")

    # -- results -------------------------------------------------------------

    def _result(self) -> SimResult:
        records = []
        for r in self.trace:
            done = self.completion.get(r.id)
            if done is None:
                raise SchedulerContractViolation(f"request {r.id} never completed")
            v = self.videos.get(r.id)
            records.append(RequestRecord(
                id=r.id,
                kind=r.kind.value,
                resolution=r.resolution.value,
                frames=r.frames,
                arrival_ms=r.arrival_ms,
                deadline_ms=r.deadline_ms,
                first_start_ms=self.first_start.get(r.id),
                completion_ms=done,
                met=done <= r.deadline_ms,
                pause_count=v.pause_count if v else 0,
                resume_count=v.resume_count if v else 0,
                reconfig_count=v.reconfig_count if v else 0,
                steps_total=r.steps_total,
                switched_steps=v.switched_steps if v else 0,
            ))
        return SimResult(
            scheduler=getattr(self.scheduler, "name", type(self.scheduler).__name__),
            n_gpus=self.n_gpus,
            records=records,
            n_rounds=self.n_rounds,
            makespan_ms=max(self.completion.values(), default=0.0),
            round_wall_ms=self.round_wall_ms,
            event_log=self.event_log,
            unsafe_pauses=self.unsafe_pauses,
            invariant_checks=self.invariant_checks,
            denoise_steps=self.denoise_steps,
        )


def run(trace: Sequence[Request], profile: LatencyProfile, scheduler, sim_config: Optional[SimConfig] = None) -> SimResult:
    return Simulator(trace, profile, scheduler, sim_config).run()


def snapshot(engine: Simulator) -> ClusterSnapshot:
    return engine.snapshot()


def apply_plan(engine: Simulator, plan: Plan) -> None:
    engine.apply_plan(plan)


def deep_copy_snapshot(snap: ClusterSnapshot) -> ClusterSnapshot:
    return copy.deepcopy(snap)
