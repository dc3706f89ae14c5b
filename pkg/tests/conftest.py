import pytest

from diffsched.profile import Kind, ResolutionClass, default_profile
from diffsched.simcore.state import Action, Plan
from diffsched.workload import Request


@pytest.fixture(scope="session")
def prof():
    return default_profile()


def video(rid, res="R256", arrival=0.0, deadline=1e9, frames=81, steps=50):
    return Request(rid, Kind.VIDEO, ResolutionClass.parse(res), frames, arrival, deadline, steps)


def image(rid, res="R720", arrival=0.0, deadline=1e9):
    return Request(rid, Kind.IMAGE, ResolutionClass.parse(res), 1, arrival, deadline, 28)


class Scripted:
    """Scheduler driven by a callback; the callback returns a list of actions or a Plan."""

    name = "scripted"

    def __init__(self, fn, safe=False):
        self.fn = fn
        self.safe_preemption = safe

    def schedule(self, snap):
        out = self.fn(snap)
        if isinstance(out, Plan):
            return out
        return Plan(snap.now_ms, list(out or []))


def start_all(snap, sp=1):
    """Start queued videos in order at ``sp`` and batch queued images one per GPU."""
    free = list(snap.free_gpus)
    acts = []
    for v in snap.queued_videos:
        if len(free) < sp:
            break
        acts.append(Action.start(v.id, free[:sp]))
        free = free[sp:]
    for r in snap.queued_images:
        if not free:
            break
        acts.append(Action.batch(free.pop(0), (r.id,)))
    return acts


def running(req, gpus, steps_done=0, at_boundary=True, next_boundary=None):
    from diffsched.simcore.state import VideoPhase, VideoRuntimeState
    gpus = tuple(gpus)
    return VideoRuntimeState(request=req, steps_done=steps_done, sp_degree=len(gpus), gpu_set=gpus,
                             phase=VideoPhase.DENOISING, at_boundary=at_boundary,
                             next_boundary_ms=next_boundary, first_start_ms=0.0)


def paused(req, sp, steps_done):
    from diffsched.simcore.state import VideoPhase, VideoRuntimeState
    return VideoRuntimeState(request=req, steps_done=steps_done, sp_degree=sp, phase=VideoPhase.PAUSED)


def queued(req):
    from diffsched.simcore.state import VideoRuntimeState
    return VideoRuntimeState(request=req)


def make_snapshot(now=0.0, n=8, images=(), queued_videos=(), running_videos=(), paused_videos=(),
                  busy=(), last_image=None, degrees=(1, 2, 4, 8), pools=None):
    from diffsched.simcore.state import ClusterSnapshot, GpuState, Role
    occupied = {}
    for v in running_videos:
        for g in v.gpu_set:
            occupied[g] = (v.id, Role.VIDEO_SP)
    for g in busy:
        occupied[g] = (-1, Role.IMAGE_BATCH)
    img_pool, vid_pool = pools or (tuple(range(n)), tuple(range(n)))
    return ClusterSnapshot(
        now_ms=now, n_gpus=n,
        gpu_states=tuple(GpuState(g, occupied.get(g), 0.0) for g in range(n)),
        free_gpus=tuple(g for g in range(n) if g not in occupied),
        queued_images=tuple(images), queued_videos=tuple(queued_videos),
        running_videos=tuple(running_videos), paused_videos=tuple(paused_videos), vae_videos=(),
        inflight_batches=(), last_image_arrival_ms=last_image,
        image_gpus=img_pool, video_gpus=vid_pool, sp_degrees=degrees,
    )


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
