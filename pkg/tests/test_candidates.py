import pytest

from diffsched.genserve.candidates import (
    CandidateAction as A,
    anchor_block,
    gen_video_candidates,
    make_candidate,
    running_candidates,
    waiting_candidates,
)

from conftest import make_snapshot, paused, queued, running, video


def test_running_enumeration(prof):
    v = running(video(0, "R720", deadline=1e7), [1, 2], steps_done=10)
    out = running_candidates(v, 0.0, prof, [3, 4], (1, 2, 4))
    assert [(c.action, c.gpu_set) for c in out] == [
        (A.HOLD, ()),
        (A.CONTINUE, (1, 2)),
        (A.SCALE_DOWN, (1,)),
        (A.SCALE_UP, (1, 2, 3, 4)),
    ]
    hold = out[0]
    assert hold.gpu_cost == 0 and hold.score == 0.0 and hold.recoverable


def test_mid_step_video_cannot_scale(prof):
    v = running(video(0, "R720", deadline=1e7), [1, 2], steps_done=10, at_boundary=False, next_boundary=500.0)
    out = running_candidates(v, 0.0, prof, [3, 4], (1, 2, 4))
    assert [c.action for c in out] == [A.HOLD, A.CONTINUE]


def test_no_hold_without_slack(prof):
    v = running(video(0, "R720", deadline=1000.0), [0], steps_done=10)
    out = running_candidates(v, 0.0, prof, [], (1,))
    assert [c.action for c in out] == [A.CONTINUE]
    assert not out[0].recoverable


def test_paused_with_no_free_gpus_only_holds(prof):
    v = paused(video(0, "R720", deadline=1e7), 2, 10)
    out = waiting_candidates(v, 0.0, prof, [], (1, 2, 4, 8))
    assert [c.action for c in out] == [A.HOLD]


def test_queued_offers_cheapest_feasible_and_fastest(prof):
    v = queued(video(0, "R480", deadline=1e7))
    out = waiting_candidates(v, 0.0, prof, list(range(8)), (1, 2, 4, 8))
    assert [c.sp for c in out[1:]] == [1, 8]
    for c in out[1:]:
        assert c.gpu_cost == len(c.gpu_set) and c.sp in (1, 2, 4, 8)


def test_reference_floor(prof):
    v = queued(video(0, "R720", deadline=1e7))
    out = waiting_candidates(v, 0.0, prof, list(range(8)), (1, 2, 4, 8), floor=4)
    assert min(c.sp for c in out[1:]) == 4


def test_zero_laxity_scores_one():
    c = make_candidate(0, A.CONTINUE, [0], 0.0)
    assert c.score == 1.0 and c.recoverable
    late = make_candidate(0, A.CONTINUE, [0], -1000.0)
    assert late.score == 0.5 and not late.recoverable


def test_anchor_block():
    assert anchor_block([1, 3, 4, 6], 2, 0) == (1, 3)
    assert anchor_block([1, 3, 4, 6], 2, 3) == (4, 6)
    with pytest.raises(ValueError):
        anchor_block([1], 2, 0)


def test_gen_from_snapshot(prof):
    v = running(video(0, "R720", deadline=1e7), [0, 1], steps_done=5)
    snap = make_snapshot(running_videos=[v])
    out = gen_video_candidates(v, snap, prof)
    assert {c.action for c in out} == {A.HOLD, A.CONTINUE, A.SCALE_DOWN, A.SCALE_UP}
