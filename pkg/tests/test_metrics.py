import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from diffsched.errors import EmptyResult
from diffsched.experiments import point_seed
from diffsched.genserve import GenServeScheduler
from diffsched.metrics import (
    REPORT_COLUMNS,
    Report,
    compare,
    compute_report,
    emit,
    read_csv,
    report_json,
)
from diffsched.simcore import run
from diffsched.simcore.state import RequestRecord, SimResult
from diffsched.workload import TraceConfig, generate_trace

GOLDEN = Path(__file__).parent / "data" / "golden_report.json"


def record(i, turnaround, met, kind="image", wait=0.0):
    return RequestRecord(i, kind, "R720", 1, 0.0, 1e9, wait, turnaround, met)


def result(records):
    return SimResult("test", 8, list(records), makespan_ms=max((r.completion_ms for r in records), default=0.0))


def test_all_met():
    rep = compute_report(result([record(0, 10.0, True), record(1, 20.0, True, "video")]))
    assert rep.sar_overall == rep.sar_image == rep.sar_video == 1.0


def test_two_of_seven():
    recs = [record(i, 100.0 + i, i < 2) for i in range(7)]
    rep = compute_report(result(recs))
    assert rep.sar_overall == pytest.approx(2 / 7)
    assert rep.sar_video is None and rep.n_videos == 0


def test_singleton_distribution():
    rep = compute_report(result([record(0, 4780.0, True, "video")]))
    assert rep.turnaround["all"]["p50"] == rep.turnaround["all"]["p99"] == 4780.0
    assert rep.cdf["video"] == [4780.0] * 101


def test_empty_result():
    with pytest.raises(EmptyResult):
        compute_report(result([]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1e5), st.booleans(), st.sampled_from(["image", "video"])),
                min_size=1, max_size=40))
def test_counts_and_cdf(rows):
    recs = [record(i, t, m, k) for i, (t, m, k) in enumerate(rows)]
    rep = compute_report(result(recs))
    assert rep.met == rep.met_images + rep.met_videos
    assert rep.n_requests == rep.n_images + rep.n_videos
    for kind, cdf in rep.cdf.items():
        assert len(cdf) == 101
        assert all(b >= a for a, b in zip(cdf, cdf[1:]))
        assert cdf[0] == min(r.turnaround_ms for r in recs if kind == "all" or r.kind == kind)


def test_compare_rows():
    rep = compute_report(result([record(0, 10.0, True)]))
    rows = compare([("a", rep), ("b", rep)])
    assert len(rows) == 2
    assert {k: v for k, v in rows[0].items() if k != "label"} == {k: v for k, v in rows[1].items() if k != "label"}
    with pytest.raises(ValueError):
        compare([])


def test_emit_round_trip(tmp_path):
    rep = compute_report(result([record(0, 10.0, True), record(1, 30.0, False, "video", wait=5.0)]))
    path = emit(rep, "json", tmp_path / "r.json")
    assert Report.from_dict(json.loads(path.read_text())) == rep
    row = read_csv(emit(rep, "csv", tmp_path / "r.csv"))[0]
    assert list(row) == list(REPORT_COLUMNS)
    assert float(row["sar_overall"]) == rep.sar_overall
    with pytest.raises(ValueError):
        emit(rep, "json", "")
    with pytest.raises(ValueError):
        emit(rep, "xml", tmp_path / "r.xml")


def test_golden_report(prof):
    trace = generate_trace(TraceConfig(n_requests=30, seed=point_seed(0, 0)), prof)
    rep = compute_report(run(trace, prof, GenServeScheduler(prof)))
    assert report_json(rep) == GOLDEN.read_text()
