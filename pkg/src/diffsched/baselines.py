"""Comparison policies: FCFS, SJF, SRTF and static-degree RASP."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import InvalidConfig
from .profile import Kind, LatencyProfile, ResolutionClass, offline_e2e_latency
from .simcore.state import Action, ClusterSnapshot, Plan, VideoPhase

POLICIES = ("fcfs", "sjf", "srtf", "rasp")

DEFAULT_RASP = {ResolutionClass.R256: 1, ResolutionClass.R480: 2, ResolutionClass.R720: 4}


@dataclass
class BaselinePolicyConfig:
    policy: str = "fcfs"
    baseline_video_sp: int = 1
    rasp_table: Dict[ResolutionClass, int] = field(default_factory=lambda: dict(DEFAULT_RASP))
    batch_images: bool = False

    def validate(self, degrees) -> "BaselinePolicyConfig":
        if self.policy not in POLICIES:
            raise InvalidConfig(f"unknown policy {self.policy!r}", "policy")
        if self.baseline_video_sp not in degrees:
            raise InvalidConfig(f"{self.baseline_video_sp} not in {tuple(degrees)}", "baseline_video_sp")
        for res, p in self.rasp_table.items():
            if p not in degrees:
                raise InvalidConfig(f"{p} not in {tuple(degrees)}", f"rasp_table.{res.value}")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "BaselinePolicyConfig":
        doc = dict(doc)
        if "rasp_table" in doc:
            doc["rasp_table"] = {ResolutionClass.parse(k): int(v) for k, v in doc["rasp_table"].items()}
        return cls(**doc)


def remaining_ms(item, profile: LatencyProfile, sp: int) -> float:
    """Remaining service time of a waiting or running job at degree ``sp``."""
    if getattr(item, "kind", None) is Kind.IMAGE:
        return profile.image_ms(item.resolution, 1)
    req = item.request
    t = item.steps_remaining * profile.video_step_ms(req.resolution, req.frames, sp)
    t += profile.vae_ms(req.resolution, req.frames)
    if item.phase is VideoPhase.QUEUED:
        t += profile.text_encode
    return t


class BaselineScheduler:
    safe_preemption = False

    def __init__(self, profile: LatencyProfile, config: Optional[BaselinePolicyConfig] = None):
        self.profile = profile
        self.config = config or BaselinePolicyConfig()
        self.config.validate(profile.valid_sp_degrees)
        self.name = self.config.policy

    def degree_for(self, item, snap: ClusterSnapshot) -> int:
        if item.phase is VideoPhase.PAUSED and item.sp_degree:
            return item.sp_degree
        if self.config.policy == "rasp":
            p = self.config.rasp_table.get(item.request.resolution, self.config.baseline_video_sp)
        else:
            p = self.config.baseline_video_sp
        fits = [q for q in snap.sp_degrees if q <= p]
        return max(fits) if fits else snap.sp_degrees[0]

    def order_key(self, item):
        if self.config.policy == "sjf":
            if getattr(item, "kind", None) is Kind.IMAGE:
                est = offline_e2e_latency(self.profile, Kind.IMAGE, item.resolution)
                return (est, item.arrival_ms, item.id)
            req = item.request
            return (offline_e2e_latency(self.profile, Kind.VIDEO, req.resolution, req.frames), req.arrival_ms, req.id)
        if getattr(item, "kind", None) is Kind.IMAGE:
            return (item.arrival_ms, item.id)
        return (item.request.arrival_ms, item.id)

    def schedule(self, snap: ClusterSnapshot) -> Plan:
        if self.config.policy == "srtf":
            return self._srtf(snap)
        plan = Plan(round_ms=snap.now_ms)
        waiting = list(snap.queued_images) + list(snap.queued_videos)
        if snap.dedicated:
            images = [r for r in waiting if getattr(r, "kind", None) is Kind.IMAGE]
            videos = [v for v in waiting if getattr(v, "kind", None) is not Kind.IMAGE]
            self._dispatch(sorted(images, key=self.order_key), list(snap.free_for(Kind.IMAGE)), snap, plan)
            self._dispatch(sorted(videos, key=self.order_key), list(snap.free_for(Kind.VIDEO)), snap, plan)
        else:
            self._dispatch(sorted(waiting, key=self.order_key), list(snap.free_gpus), snap, plan)
        return plan

    def _dispatch(self, ordered, free: List[int], snap: ClusterSnapshot, plan: Plan, strict: bool = True):
        """Place jobs in order; with ``strict`` the first job that does not fit blocks the rest."""
        taken = set()
        for item in ordered:
            if getattr(item, "kind", None) is Kind.IMAGE:
                if item.id in taken:
                    continue
                if not free:
                    if strict:
                        break
                    continue
                members = [item.id]
                if self.config.batch_images:
                    for other in ordered:
                        if len(members) >= self.profile.max_image_batch:
                            break
                        if (getattr(other, "kind", None) is Kind.IMAGE and other.id not in taken
                                and other.id != item.id and other.resolution == item.resolution):
                            members.append(other.id)
                taken.update(members)
                plan.actions.append(Action.batch(free.pop(0), members))
                continue
            p = self.degree_for(item, snap)
            if len(free) < p:
                if strict:
                    break
                continue
            gpus, free[:] = free[:p], free[p:]
            if item.phase is VideoPhase.PAUSED:
                plan.actions.append(Action.resume(item.id, gpus))
            else:
                plan.actions.append(Action.start(item.id, gpus))
        return free

    def _srtf(self, snap: ClusterSnapshot) -> Plan:
        prof = self.profile
        plan = Plan(round_ms=snap.now_ms)

        def rem(item):
            if getattr(item, "kind", None) is Kind.IMAGE:
                return remaining_ms(item, prof, 1)
            return remaining_ms(item, prof, self.degree_for(item, snap))

        def key(item):
            arrival = item.arrival_ms if getattr(item, "kind", None) is Kind.IMAGE else item.request.arrival_ms
            return (rem(item), arrival, item.id)

        waiting = sorted(list(snap.queued_images) + list(snap.queued_videos) + list(snap.paused_videos), key=key)
        victims = sorted((v for v in snap.running_videos if v.at_boundary),
                         key=lambda v: (-remaining_ms(v, prof, v.sp_degree), v.id))
        pools = [(None, list(snap.free_gpus))] if not snap.dedicated else [
            (Kind.IMAGE, list(snap.free_for(Kind.IMAGE))), (Kind.VIDEO, list(snap.free_for(Kind.VIDEO)))]
        for kind, free in pools:
            if kind is None:
                mine = waiting
            elif kind is Kind.IMAGE:
                mine = [w for w in waiting if getattr(w, "kind", None) is Kind.IMAGE]
            else:
                mine = [w for w in waiting if getattr(w, "kind", None) is not Kind.IMAGE]
            pool = set(snap.image_gpus if kind is Kind.IMAGE else snap.video_gpus) if kind else None
            for item in mine:
                need = 1 if getattr(item, "kind", None) is Kind.IMAGE else self.degree_for(item, snap)
                while len(free) < need:
                    # preempt the running video with the most remaining work, if it has more than this job
                    cand = next((v for v in victims if pool is None or set(v.gpu_set) <= pool), None)
                    if cand is None or remaining_ms(cand, prof, cand.sp_degree) <= rem(item):
                        break
                    victims.remove(cand)
                    plan.actions.append(Action.pause(cand.id))
                    free.extend(cand.gpu_set)
                    free.sort()
                if len(free) < need:
                    break
                gpus, free[:] = free[:need], free[need:]
                if getattr(item, "kind", None) is Kind.IMAGE:
                    plan.actions.append(Action.batch(gpus[0], (item.id,)))
                elif item.phase is VideoPhase.PAUSED:
                    plan.actions.append(Action.resume(item.id, gpus))
                else:
                    plan.actions.append(Action.start(item.id, gpus))
        return plan


def make_baseline(policy: str, profile: LatencyProfile, **overrides) -> BaselineScheduler:
    return BaselineScheduler(profile, BaselinePolicyConfig(policy=policy, **overrides))
