"""Deadline-ordered image batching under a GPU budget."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from ..profile import LatencyProfile


@dataclass
class _Batch:
    resolution: object
    members: List = field(default_factory=list)
    # members that can still meet their deadline; the rest ride along
    satisfiable: int = 0


@dataclass(frozen=True)
class ImageBudgetOption:
    gpu_budget: int
    batches: Tuple[Tuple[int, ...], ...] = ()
    satisfiable_count: int = 0
    score: float = 0.0

    @property
    def n_batches(self) -> int:
        return len(self.batches)


def image_score(slack_ms: float) -> float:
    """Per-image score; slack is measured in seconds so it is comparable with video laxity."""
    return 1.0 / (1.0 + max(0.0, slack_ms) / 1000.0)


def _fits(batch: _Batch, req, now_ms: float, profile: LatencyProfile, max_batch: int) -> bool:
    size = len(batch.members) + 1
    if size > max_batch:
        return False
    done = now_ms + profile.image_ms(batch.resolution, size)
    if req is not None and done > req.deadline_ms:
        return False
    return all(done <= m.deadline_ms for m in batch.members if now_ms + profile.image_ms(m.resolution, 1) <= m.deadline_ms)


def edf_plans(queued_images: Sequence, max_budget: int, now_ms: float,
              profile: LatencyProfile, max_batch: Optional[int] = None) -> List[ImageBudgetOption]:
    """Options for every budget 0..max_budget from a single deadline-ordered pass.

    Batches open in deadline order, so the option for budget g is the first
    g batches of the unconstrained plan: those are exactly the batches the
    greedy would have built had it stopped opening new ones at g.
    """
    max_batch = profile.max_image_batch if max_batch is None else max_batch
    order = sorted(queued_images, key=lambda r: (r.deadline_ms, r.arrival_ms, r.id))
    batches: List[_Batch] = []
    doomed = []
    for req in order:
        if now_ms + profile.image_ms(req.resolution, 1) > req.deadline_ms:
            doomed.append(req)
            continue
        home = None
        for b in batches:
            if b.resolution == req.resolution and _fits(b, req, now_ms, profile, max_batch):
                home = b
                break
        if home is None:
            if len(batches) >= max_budget:
                continue
            home = _Batch(req.resolution)
            batches.append(home)
        home.members.append(req)
        home.satisfiable += 1

    options = [ImageBudgetOption(0)]
    for g in range(1, max_budget + 1):
        chosen = batches[:g]
        count = 0
        score = 0.0
        for b in chosen:
            done = now_ms + profile.image_ms(b.resolution, len(b.members))
            for m in b.members:
                count += 1
                score += image_score(m.deadline_ms - done)
        extra = _place_doomed(chosen, doomed, g, now_ms, profile, max_batch)
        options.append(ImageBudgetOption(
            gpu_budget=g,
            batches=tuple(tuple(m.id for m in b.members) for b in extra),
            satisfiable_count=count,
            score=score,
        ))
    return options


def _place_doomed(chosen: List[_Batch], doomed: Sequence, g: int, now_ms: float,
                  profile: LatencyProfile, max_batch: int) -> List[_Batch]:
    """Requests that cannot make their deadline still get served, but only with spare capacity."""
    if not doomed:
        return chosen
    out = [_Batch(b.resolution, list(b.members), b.satisfiable) for b in chosen]
    for req in doomed:
        home = None
        for b in out:
            if b.resolution == req.resolution and _fits(b, None, now_ms, profile, max_batch):
                home = b
                break
        if home is None:
            if len(out) >= g:
                continue
            home = _Batch(req.resolution)
            out.append(home)
        home.members.append(req)
    return out


def edf_image_batch(queued_images: Sequence, g: int, now_ms: float, profile: LatencyProfile) -> ImageBudgetOption:
    if g < 0:
        raise ValueError("gpu budget must be >= 0")
    return edf_plans(queued_images, g, now_ms, profile)[g]


def dynamic_wait_budget(current_batch: Sequence, now_ms: float, profile: LatencyProfile) -> float:
    """How long a same-resolution batch can stay open before its tightest member is at risk."""
    if not current_batch:
        raise ValueError("batch must be non-empty")
    done = now_ms + profile.image_ms(current_batch[0].resolution, len(current_batch))
    return max(0.0, min(r.deadline_ms - done for r in current_batch))
