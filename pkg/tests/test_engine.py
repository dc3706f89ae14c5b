import pytest

from diffsched.errors import InvalidConfig, SchedulerContractViolation
from diffsched.genserve import GenServeScheduler
from diffsched.profile import ResolutionClass as R
from diffsched.simcore import SimConfig, Simulator, run
from diffsched.simcore.state import Action, Plan, VideoPhase
from diffsched.workload import TraceConfig, generate_trace

from conftest import Scripted, image, start_all, video


def test_empty_trace(prof):
    res = run([], prof, Scripted(lambda s: []))
    assert res.records == [] and res.makespan_ms == 0.0


def test_single_video_closed_form(prof):
    res = run([video(0, "R256", deadline=7170.0)], prof, Scripted(start_all), SimConfig(n_gpus=1))
    rec = res.records[0]
    assert rec.completion_ms == pytest.approx(4780.0, abs=1e-6)
    assert rec.met


def test_two_images_batched(prof):
    def batch_both(snap):
        if len(snap.queued_images) == 2:
            return [Action.batch(0, [r.id for r in snap.queued_images])]
        return []

    res = run([image(0), image(1)], prof, Scripted(batch_both), SimConfig(n_gpus=1))
    assert [r.completion_ms for r in res.records] == pytest.approx([1960.0, 1960.0])


def test_fresh_engine_state(prof):
    sim = Simulator([], prof, Scripted(lambda s: []))
    snap = sim.snapshot()
    assert snap.free_gpus == tuple(range(8))
    assert not (snap.queued_images or snap.queued_videos or snap.running_videos or snap.paused_videos)


def test_arrival_is_queued_before_scheduling(prof):
    seen = []

    def fn(snap):
        seen.append([r.id for r in snap.queued_images])
        return start_all(snap)

    run([image(5)], prof, Scripted(fn))
    assert seen[0] == [5]


def test_start_occupies_exactly_sp_gpus(prof):
    seen = []

    def fn(snap):
        if snap.queued_videos:
            return [Action.start(snap.queued_videos[0].id, [0, 1, 2, 3])]
        if not seen:
            seen.append([g for g in snap.gpu_states if g.occupant is not None])
        return []

    run([video(0, "R720")], prof, Scripted(fn))
    assert [g.gpu_id for g in seen[0]] == [0, 1, 2, 3]
    assert all(g.occupant[0] == 0 for g in seen[0])


def test_all_hold_plan_changes_nothing(prof):
    sim = Simulator([], prof, Scripted(lambda s: []))
    before = sim.snapshot()
    sim.apply_plan(Plan(0.0))
    assert sim.snapshot() == before
    assert sim._events == []


def test_pause_resume_arithmetic(prof):
    wait = 5000.0
    state = {}

    def fn(snap):
        if snap.queued_videos:
            return [Action.start(0, [0])]
        if snap.running_videos:
            v = snap.running_videos[0]
            if v.at_boundary and v.steps_done == 20 and "paused" not in state:
                state["paused"] = snap.now_ms
                return Plan(snap.now_ms, [Action.pause(0)], wake_at_ms=snap.now_ms + wait)
        if snap.paused_videos and snap.now_ms >= state["paused"] + wait:
            state["steps_at_resume"] = snap.paused_videos[0].steps_done
            return [Action.resume(0, [0])]
        return []

    res = run([video(0, "R720")], prof, Scripted(fn), SimConfig(n_gpus=1))
    assert state["paused"] == pytest.approx(30.0 + 20 * 1000.0)
    assert state["steps_at_resume"] == 20
    plain = 30.0 + 50 * 1000.0 + 2470.0
    delay = res.records[0].completion_ms - plain
    assert delay == pytest.approx(wait + prof.pause_ms(1) + prof.resume_ms(1))
    assert res.records[0].pause_count == 1 and res.records[0].resume_count == 1


def test_reconfigure_shrinks_at_boundary(prof):
    seen = {}

    def fn(snap):
        if snap.queued_videos:
            return [Action.start(0, [0, 1, 2, 3])]
        v = snap.running_videos[0] if snap.running_videos else None
        if v is not None and v.at_boundary and v.steps_done == 10 and "t" not in seen:
            seen["t"] = snap.now_ms
            return [Action.reconfigure(0, [0, 1])]
        if v is not None and "t" in seen and "free" not in seen:
            seen["free"] = snap.free_gpus
        return []

    res = run([video(0, "R720")], prof, Scripted(fn))
    t4, t2 = prof.video_step_ms(R.R720, 81, 4), prof.video_step_ms(R.R720, 81, 2)
    assert seen["t"] == pytest.approx(30.0 + 10 * t4)
    assert {2, 3} <= set(seen["free"])
    expected = seen["t"] + prof.sp_reconfig_overhead + prof.resume_ms(2) + 40 * t2 + 2470.0
    assert res.records[0].completion_ms == pytest.approx(expected)


def test_mid_step_pause_lands_at_boundary(prof):
    log = []

    def fn(snap):
        if snap.queued_videos:
            return [Action.start(0, [0])]
        if snap.running_videos and not log:
            v = snap.running_videos[0]
            if not v.at_boundary:
                log.append(snap.now_ms)
                return [Action.pause(0)]
        if snap.paused_videos and len(log) == 1:
            log.append((snap.now_ms, snap.paused_videos[0].steps_done))
            return [Action.resume(0, [0])]
        return []

    # an image arrival forces a round while the first step is in flight
    run([video(0, "R720"), image(1, arrival=500.0)], prof, Scripted(lambda s: fn(s) + _place_images(s)))
    t_pause, steps = log[1]
    assert t_pause == pytest.approx(1030.0) and steps == 1


def _place_images(snap):
    free = [g for g in snap.free_gpus if g != 0]
    return [Action.batch(free[i], (r.id,)) for i, r in enumerate(snap.queued_images[:len(free)])]


def test_vae_runs_on_one_gpu(prof):
    seen = []

    def fn(snap):
        if snap.vae_videos:
            seen.append((snap.vae_videos[0].gpu_set, snap.free_gpus))
        if snap.queued_videos:
            return [Action.start(0, [0, 1, 2, 3])]
        return []

    # a second arrival after the last step gives a round during VAE
    t4 = prof.video_step_ms(R.R720, 81, 4)
    late = image(1, arrival=30.0 + 50 * t4 + 100.0)
    run([video(0, "R720"), late], prof, Scripted(lambda s: fn(s) + _images_anywhere(s)))
    gpus, free = seen[0]
    assert gpus == (0,)
    assert {1, 2, 3} <= set(free)


def _images_anywhere(snap):
    return [Action.batch(g, (r.id,)) for g, r in zip(snap.free_gpus[::-1], snap.queued_images)]


@pytest.mark.parametrize("bad", [
    lambda s: [Action.start(0, [0, 1, 2])],               # degree 3 not allowed
    lambda s: [Action.start(0, [9])],                     # no such GPU
    lambda s: [Action.start(0, [0]), Action.batch(0, (1,))],  # same GPU twice
    lambda s: [Action.resume(0, [0])],                    # not paused
    lambda s: [Action.batch(0, (1, 2))],                  # mixed resolutions
    lambda s: [Action.start(0, [0]), Action.start(0, [1])],   # duplicate id
])
def test_contract_violations(prof, bad):
    trace = [video(0), image(1, "R720"), image(2, "R1024")]
    with pytest.raises(SchedulerContractViolation):
        run(trace, prof, Scripted(bad))


def test_safe_scheduler_cannot_pause_doomed_video(prof):
    def fn(snap):
        if snap.queued_videos:
            return [Action.start(0, [0])]
        v = snap.running_videos[0]
        if v.at_boundary:
            return [Action.pause(0)]
        return []

    doomed = video(0, "R720", deadline=1000.0)
    with pytest.raises(SchedulerContractViolation):
        run([doomed], prof, Scripted(fn, safe=True))


def test_unsafe_pause_counted_for_baselines(prof):
    state = {}

    def fn(snap):
        if snap.queued_videos:
            return [Action.start(0, [0])]
        if snap.running_videos and snap.running_videos[0].at_boundary and "p" not in state:
            state["p"] = 1
            return [Action.pause(0)]
        if snap.paused_videos:
            return [Action.resume(0, [0])]
        return []

    res = run([video(0, "R720", deadline=1000.0)], prof, Scripted(fn))
    assert res.unsafe_pauses == 1


def test_snapshot_is_a_copy(prof):
    def fn(snap):
        for v in snap.running_videos:
            v.steps_done = 999
            v.gpu_set = ()
        return start_all(snap)

    res = run([video(0, "R256")], prof, Scripted(fn), SimConfig(n_gpus=1))
    assert res.records[0].completion_ms == pytest.approx(4780.0)


def test_stalled_scheduler_detected(prof):
    with pytest.raises(SchedulerContractViolation):
        run([image(0)], prof, Scripted(lambda s: []), SimConfig(max_idle_rounds=5))


def test_bad_partition():
    with pytest.raises(InvalidConfig):
        SimConfig(n_gpus=8, partition=(5, 5)).pools()


def test_deterministic(prof):
    trace = generate_trace(TraceConfig(n_requests=40, seed=11), prof)
    a = run(trace, prof, GenServeScheduler(prof))
    b = run(trace, prof, GenServeScheduler(prof))
    assert a.event_log == b.event_log
    assert a.records == b.records
    assert a.invariant_checks > 0


def test_phase_bookkeeping(prof):
    res = run([video(0, "R480"), video(1, "R256")], prof, Scripted(start_all))
    assert all(r.completion_ms > 0 for r in res.records)
    assert VideoPhase.DONE.value == "done"
