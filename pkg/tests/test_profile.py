import json

import pytest

from diffsched.errors import ParseError, SchemaError, UnknownConfiguration
from diffsched.profile import (
    Kind,
    LatencyProfile,
    ResolutionClass as R,
    image_batch_latency,
    load_profile,
    offline_e2e_latency,
    save_profile,
    sp_gamma,
    video_remaining_time,
    video_step_latency,
)


def test_default_degrees(prof):
    assert prof.valid_sp_degrees == (1, 2, 4, 8)


@pytest.mark.parametrize("res,sp,expected", [
    (R.R720, 1, 1000.0),
    (R.R480, 1, 320.6),
    (R.R720, 8, 1000.0 / 7.0),
])
def test_step_anchors(prof, res, sp, expected):
    assert video_step_latency(prof, res, 81, sp) == pytest.approx(expected, abs=0.05)


def test_interpolated_degree_matches_speedup_curve(prof):
    # independent oracle: gamma from the sp=8 anchor, then p / (1 + gamma (p - 1))
    t1 = prof.video_step_ms(R.R720, 81, 1)
    t8 = prof.video_step_table[(R.R720, 81)][8]
    gamma = (8 * t8 / t1 - 1) / 7
    for p in (2, 4):
        if p in prof.video_step_table[(R.R720, 81)]:
            continue
        assert prof.video_step_ms(R.R720, 81, p) == pytest.approx(t1 * (1 + gamma * (p - 1)) / p)
    assert sp_gamma(8, 7.0) == pytest.approx(1 / 49)


def test_steps_non_increasing_in_degree(prof):
    for (res, frames) in prof.video_step_table:
        vals = [prof.video_step_ms(res, frames, p) for p in prof.valid_sp_degrees]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_image_latency(prof):
    assert image_batch_latency(prof, R.R720, 1) == 1400.0
    assert image_batch_latency(prof, R.R720, 2) == pytest.approx(1960.0)
    assert image_batch_latency(prof, R.R720, 1) == prof.image_e2e_table[(R.R720, 1)]


def test_remaining_time(prof):
    assert video_remaining_time(prof, R.R720, 81, 1, 30) == pytest.approx(30000.0)
    assert video_remaining_time(prof, R.R480, 41, 4, 0) == 0.0
    assert video_remaining_time(prof, R.R720, 81, 1, 0, include_vae=True) == pytest.approx(2470.0)
    with pytest.raises(ValueError):
        video_remaining_time(prof, R.R720, 81, 1, -1)


def test_offline_e2e(prof):
    assert offline_e2e_latency(prof, Kind.VIDEO, R.R256, 81) == pytest.approx(4780.0, abs=1e-6)
    expected = 30 + 50 * prof.video_step_ms(R.R720, 81, 4) + 2470
    assert offline_e2e_latency(prof, Kind.VIDEO, R.R720, 81) == pytest.approx(expected)
    assert offline_e2e_latency(prof, Kind.IMAGE, R.R720) == 1400.0


def test_unknown_lookups(prof):
    with pytest.raises(UnknownConfiguration):
        prof.video_step_ms(R.R1440, 81, 1)
    with pytest.raises(UnknownConfiguration):
        prof.video_step_ms(R.R720, 81, 3)
    with pytest.raises(UnknownConfiguration):
        prof.vae_ms(R.R720, 17)


def test_round_trip(prof, tmp_path):
    path = tmp_path / "p.json"
    save_profile(prof, path)
    again = load_profile(path)
    assert again == prof
    save_profile(again, tmp_path / "q.json")
    assert (tmp_path / "q.json").read_text() == path.read_text()


def test_missing_key_is_schema_error(prof):
    doc = prof.to_dict()
    del doc["video_step_ms"]
    with pytest.raises(SchemaError) as exc:
        LatencyProfile.from_dict(doc)
    assert "video_step_ms" in exc.value.missing


def test_increasing_step_table_rejected(prof):
    doc = prof.to_dict()
    doc["video_step_ms"]["R720"]["81"]["8"] = 5000.0
    with pytest.raises(ParseError):
        LatencyProfile.from_dict(doc)


def test_bad_json_names_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "steps": ,\n}')
    with pytest.raises(ParseError) as exc:
        load_profile(path)
    assert exc.value.line == 2


def test_resolution_parse():
    assert R.parse("720p") is R.R720
    assert R.parse(1024) is R.R1024
    with pytest.raises(UnknownConfiguration):
        R.parse("R999")
    json.dumps(R.R720.value)
