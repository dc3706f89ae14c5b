import hashlib
import json

import pytest

from diffsched.cli import main
from diffsched.experiments import ExperimentConfig, point_dir, point_seed
from diffsched.errors import InvalidConfig
from diffsched.workload import load_trace


def write_config(tmp_path, **doc):
    base = {"trace": {"n_requests": 20}, "seeds": [0]}
    base.update(doc)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base))
    return str(path)


def snapshot_tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timing.json"}


def test_point_seed_frozen():
    assert point_seed(0, 0) == 6213027144842677344
    assert point_seed(3, 2) == int.from_bytes(hashlib.sha256(b"3:2").digest()[:8], "big") >> 1


def test_point_dir():
    assert point_dir(1.0, 24.0, 0.5) == "sigma=1_rate=24_mix=balanced"
    assert point_dir(0.8, 24.0, 0.3) == "sigma=0.8_rate=24_mix=0.3"


def test_run_writes_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--config", write_config(tmp_path), "--out", str(out)]) == 0
    run_dir = out / "genserve" / "sigma=1_rate=24_mix=balanced" / "seed=0"
    for name in ("report.json", "report.csv", "cdf.csv", "requests.csv", "timing.json"):
        assert (run_dir / name).exists()
    assert (out / "comparison.csv").exists()
    assert "sar=" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, sweep={"sigma": [0.8, 1.3]})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", cfg, "--out", str(a)]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b)]) == 0
    assert snapshot_tree(a) == snapshot_tree(b)
    assert len([p for p in a.rglob("report.json")]) == 2 * 5


def test_ablate_and_dedicated(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "o"
    assert main(["ablate", "--config", cfg, "--out", str(out)]) == 0
    assert sorted(p.name for p in (out / "ablation").iterdir() if p.is_dir()) == sorted(
        ["fcfs", "+preemption", "+dp", "+sp"])
    assert main(["dedicated", "--config", cfg, "--out", str(out)]) == 0
    assert sorted(p.name for p in (out / "dedicated").iterdir()) == ["2-6", "3-5", "4-4", "replicated"]


def test_bad_partition_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, partition="5:5")
    assert main(["run", "--config", cfg]) == 2
    assert "partition" in capsys.readouterr().err


def test_unknown_scheduler_and_missing_file(tmp_path):
    assert main(["run", "--config", write_config(tmp_path), "--scheduler", "lifo"]) == 2
    assert main(["run", "--config", str(tmp_path / "nope.json")]) == 2


def test_gen_trace(tmp_path, capsys):
    path = tmp_path / "t.jsonl"
    assert main(["gen-trace", "--config", write_config(tmp_path), "--out", str(path)]) == 0
    assert len(load_trace(path)) == 20
    assert json.loads(capsys.readouterr().out)["n"] == 20


def test_validate_profile(tmp_path):
    assert main(["validate-profile"]) == 0
    bad = tmp_path / "p.json"
    bad.write_text("{}")
    assert main(["validate-profile", str(bad)]) == 2


def test_config_field_paths():
    with pytest.raises(InvalidConfig) as exc:
        ExperimentConfig.from_dict({"sweep": {"sigma": [1.0, -1.0]}})
    assert exc.value.path == "sweep.sigma[1]"
    with pytest.raises(InvalidConfig):
        ExperimentConfig.from_dict({"bogus": 1})


def test_contract_violation_exit_code(tmp_path, monkeypatch):
    from diffsched import experiments
    from diffsched.simcore.state import Action, Plan

    class Broken:
        name = "broken"

        def schedule(self, snap):
            return Plan(snap.now_ms, [Action.batch(99, (r.id,)) for r in snap.queued_images[:1]])

    monkeypatch.setattr(experiments, "make_scheduler", lambda *a, **k: Broken())
    cfg = write_config(tmp_path, trace={"n_requests": 5, "video_ratio": 0.0})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
