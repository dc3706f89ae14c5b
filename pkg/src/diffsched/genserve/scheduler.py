"""The co-serving scheduler: one knapsack decision per round over videos and image batches."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from ..profile import LatencyProfile
from ..simcore.state import Action, ActionKind, ClusterSnapshot, Plan, VideoPhase
from .batching import ImageBudgetOption, dynamic_wait_budget, edf_plans
from .candidates import (
    CandidateAction,
    VideoCandidate,
    running_candidates,
    waiting_candidates,
)
from .knapsack import Selection, dp_solve
from .slack import BUDGET_TIGHT, ResumePolicy, resume_check, select_victims


@dataclass
class GenServeConfig:
    preemption: bool = True
    dp_solver: bool = True
    sp_switching: bool = True
    batching: bool = True
    resume: ResumePolicy = field(default_factory=ResumePolicy)
    # Hold a lone image batch open for more same-resolution arrivals while
    # this fraction of its wait budget remains. None disables holding.
    batch_wait_fraction: Optional[float] = None
    min_batch_wait_ms: float = 50.0
    sp_degrees: Optional[Tuple[int, ...]] = None
    # Part of each video's SLO budget held back when judging recoverability.
    laxity_reserve: float = 0.0
    # Never start or resume a video below its resolution's reference degree.
    start_at_reference: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "GenServeConfig":
        doc = dict(doc)
        resume = ResumePolicy(**doc.pop("resume", {}))
        for k in ("idle_window_ms", "safety_margin_steps", "idle_window_steps"):
            if k in doc:
                setattr(resume, k, doc.pop(k))
        if "sp_degrees" in doc and doc["sp_degrees"] is not None:
            doc["sp_degrees"] = tuple(doc["sp_degrees"])
        return cls(resume=resume, **doc)


class GenServeScheduler:
    name = "genserve"
    safe_preemption = True

    def __init__(self, profile: LatencyProfile, config: Optional[GenServeConfig] = None, name: Optional[str] = None):
        self.profile = profile
        self.config = config or GenServeConfig()
        if name:
            self.name = name
        self.last_selection: Optional[Selection] = None
        self._hold_until: List[float] = []

    # -- helpers -------------------------------------------------------------

    def _degrees(self, snap: ClusterSnapshot, v) -> Tuple[int, ...]:
        degrees = self.config.sp_degrees or snap.sp_degrees
        degrees = tuple(p for p in degrees if p in snap.sp_degrees)
        if self.config.sp_switching:
            return degrees
        p = v.sp_degree or self.profile.reference_sp(v.request.resolution)
        fits = [q for q in degrees if q <= p]
        return (max(fits),) if fits else degrees[:1]

    def _floor(self, v) -> int:
        if not self.config.start_at_reference:
            return 1
        return self.profile.reference_sp(v.request.resolution)

    def _reserve(self, v) -> float:
        return self.config.laxity_reserve * (v.deadline_ms - v.request.arrival_ms)

    def _image_options(self, snap: ClusterSnapshot, budget: int) -> List[ImageBudgetOption]:
        max_batch = None if self.config.batching else 1
        return edf_plans(snap.queued_images, budget, snap.now_ms, self.profile, max_batch)

    # -- one round -------------------------------------------------------------

    def schedule(self, snap: ClusterSnapshot) -> Plan:
        now = snap.now_ms
        prof = self.profile
        video_pool = set(snap.video_gpus)
        image_pool = set(snap.image_gpus)
        free = set(snap.free_gpus)
        video_free = sorted(free & video_pool)

        decision = resume_check(
            snap.paused_videos, snap.queued_images, now, prof, self.config.resume,
            free_gpus=len(video_free), last_image_arrival_ms=snap.last_image_arrival_ms,
            degrees=snap.sp_degrees,
        )

        groups: List[List[VideoCandidate]] = []
        owners = []
        for v in snap.running_videos:
            groups.append(running_candidates(
                v, now, prof, video_free, self._degrees(snap, v),
                allow_hold=self.config.preemption, scaling=self.config.sp_switching,
                reserve_ms=self._reserve(v)))
            owners.append(v)

        waiting = sorted(snap.paused_videos + snap.queued_videos,
                         key=lambda v: (v.phase is not VideoPhase.PAUSED or v.id not in decision.triggers,
                                        v.deadline_ms, v.id))
        cursor = 0
        for v in waiting:
            paused = v.phase is VideoPhase.PAUSED
            trig = decision.triggers.get(v.id) if paused else None
            offer = (not paused) or trig is not None
            cands = waiting_candidates(
                v, now, prof, video_free, self._degrees(snap, v), cursor,
                offer_start=offer and bool(video_free),
                force_unrecoverable_hold=trig == BUDGET_TIGHT, reserve_ms=self._reserve(v),
                floor=self._floor(v))
            if len(cands) > 1:
                cursor += min(c.gpu_cost for c in cands[1:])
            groups.append(cands)
            owners.append(v)

        # GPUs images may use this round: free now, or released by an immediate pause/shrink
        boundary = set()
        for v in snap.running_videos:
            if v.at_boundary:
                boundary.update(v.gpu_set)
        img_gpus = sorted((free | boundary) & image_pool)
        image_mask = 0
        for g in img_gpus:
            image_mask |= 1 << g
        options = self._image_options(snap, len(img_gpus))

        if self.config.dp_solver:
            sel = dp_solve(groups, options, snap.n_gpus, image_mask)
        else:
            sel = self._greedy(groups, options, image_mask, snap)
        self.last_selection = sel
        plan = self.materialize(sel, groups, owners, options, snap)
        plan.wake_at_ms = self._wake(decision.wake_at_ms, plan, snap)
        return plan

    @staticmethod
    def _paused_now(plan: Plan, snap: ClusterSnapshot) -> bool:
        boundary = {v.id for v in snap.running_videos if v.at_boundary}
        return any(a.kind is ActionKind.PAUSE and a.video_id in boundary for a in plan.actions)

    def _greedy(self, groups, options, image_mask, snap) -> Selection:
        """Without the solver: keep every running video, start what fits in order, images get the rest."""
        used = 0
        choices = []
        rec = 0
        score = 0.0
        for cands in groups:
            pick = 0
            for k, c in enumerate(cands):
                if c.action is CandidateAction.HOLD:
                    continue
                if c.mask & used:
                    continue
                pick = k
                break
            c = cands[pick]
            used |= c.mask
            choices.append(pick)
            rec += int(c.recoverable)
            score += c.score
        g = min(bin(image_mask & ~used).count("1"), len(options) - 1)
        return Selection(tuple(choices), g, rec + options[g].satisfiable_count, score + options[g].score, used)

    def materialize(self, sel: Selection, groups, owners, options, snap: ClusterSnapshot) -> Plan:
        plan = Plan(round_ms=snap.now_ms)
        released = set()
        claimed = set()
        for v, cands, k in zip(owners, groups, sel.choices):
            c = cands[k]
            claimed.update(c.gpu_set)
            if v.phase is VideoPhase.DENOISING:
                if c.action is CandidateAction.HOLD:
                    plan.actions.append(Action.pause(v.id))
                    if v.at_boundary:
                        released.update(v.gpu_set)
                elif c.action is CandidateAction.CONTINUE:
                    if v.pending is not None:
                        plan.actions.append(Action.keep(v.id))
                else:
                    plan.actions.append(Action.reconfigure(v.id, c.gpu_set))
                    if v.at_boundary:
                        released.update(set(v.gpu_set) - set(c.gpu_set))
            elif c.action is not CandidateAction.HOLD:
                if v.phase is VideoPhase.PAUSED:
                    plan.actions.append(Action.resume(v.id, c.gpu_set))
                else:
                    plan.actions.append(Action.start(v.id, c.gpu_set))
        open_gpus = sorted(((set(snap.free_gpus) | released) - claimed) & set(snap.image_gpus))
        batches = options[sel.image_budget].batches if options else ()
        held = self._held_batches(batches, snap)
        gi = 0
        for b in batches:
            if b in held:
                continue
            if gi >= len(open_gpus):
                break
            plan.actions.append(Action.batch(open_gpus[gi], b))
            gi += 1
        return plan

    def _held_batches(self, batches, snap: ClusterSnapshot):
        """Batches kept open a little longer to pick up same-resolution arrivals."""
        frac = self.config.batch_wait_fraction
        self._hold_until = []
        if frac is None or not self.config.batching:
            return set()
        by_id = {r.id: r for r in snap.queued_images}
        held = set()
        for b in batches:
            if len(b) >= self.profile.max_image_batch:
                continue
            reqs = [by_id[i] for i in b]
            wait = dynamic_wait_budget(reqs, snap.now_ms, self.profile)
            budget = min(r.deadline_ms - r.arrival_ms for r in reqs)
            hold = wait - (1.0 - frac) * budget
            if hold >= self.config.min_batch_wait_ms:
                held.add(b)
                self._hold_until.append(snap.now_ms + hold)
        return held

    def _wake(self, resume_wake, plan: Plan, snap: ClusterSnapshot) -> Optional[float]:
        if self._paused_now(plan, snap):
            # look again once the pause has landed so its resume deadline is tracked
            return snap.now_ms
        times = [t for t in [resume_wake] + self._hold_until if t is not None and t > snap.now_ms]
        return min(times) if times else None


class PreemptionOnlyScheduler:
    """FCFS dispatch plus slack-ranked preemption for waiting images; no solver, no batching, fixed sp=1.

    Queued images that find no free GPU take GPUs from the highest-slack running
    videos. Paused videos come back through the resume triggers.
    """

    name = "+preemption"
    safe_preemption = True

    def __init__(self, profile: LatencyProfile, resume: Optional[ResumePolicy] = None, video_sp: int = 1):
        self.profile = profile
        self.resume = resume or ResumePolicy()
        self.video_sp = video_sp

    def schedule(self, snap: ClusterSnapshot) -> Plan:
        now = snap.now_ms
        prof = self.profile
        plan = Plan(round_ms=now)
        free = list(snap.free_gpus)
        decision = resume_check(
            snap.paused_videos, snap.queued_images, now, prof, self.resume,
            free_gpus=len(free), last_image_arrival_ms=snap.last_image_arrival_ms, degrees=snap.sp_degrees)

        # triggered paused videos go first, tightest deadline first
        triggered = sorted((v for v in snap.paused_videos if v.id in decision.triggers),
                           key=lambda v: (decision.triggers[v.id] != BUDGET_TIGHT, v.deadline_ms, v.id))
        queue = [(r.arrival_ms, 0, r.id, r) for r in snap.queued_images]
        queue += [(v.request.arrival_ms, 1, v.id, v) for v in snap.queued_videos]
        queue.sort(key=lambda t: (t[0], t[2]))
        ordered = [(1, v) for v in triggered] + [(kind, item) for _, kind, _, item in queue]

        for kind, item in ordered:
            if kind == 0:
                if not free:
                    break
                plan.actions.append(Action.batch(free.pop(0), (item.id,)))
            else:
                p = item.sp_degree if item.phase is VideoPhase.PAUSED and item.sp_degree else self.video_sp
                if len(free) < p:
                    break
                gpus, free = free[:p], free[p:]
                if item.phase is VideoPhase.PAUSED:
                    plan.actions.append(Action.resume(item.id, gpus))
                else:
                    plan.actions.append(Action.start(item.id, gpus))

        started = {i for a in plan.actions for i in a.request_ids}
        waiting_images = [r for r in snap.queued_images if r.id not in started]
        if waiting_images:
            boundary = [v for v in snap.running_videos if v.at_boundary and v.pending is None]
            victims = select_victims(boundary, len(waiting_images), now, prof)
            freed = []
            for v in victims:
                plan.actions.append(Action.pause(v.id))
                freed.extend(v.gpu_set)
            freed.sort()
            for r in sorted(waiting_images, key=lambda r: (r.arrival_ms, r.id)):
                if not freed:
                    break
                plan.actions.append(Action.batch(freed.pop(0), (r.id,)))
        if decision.wake_at_ms is not None:
            plan.wake_at_ms = decision.wake_at_ms
        if any(a.kind is ActionKind.PAUSE for a in plan.actions):
            plan.wake_at_ms = now
        return plan
