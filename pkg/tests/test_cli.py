import json

import pytest
import yaml

from preheat.cli import main


@pytest.fixture(scope="module")
def quick(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "run.yaml"
    cfg.write_text(
        yaml.safe_dump(
            {
                "episode": {"max_duration": 30.0},
                "training": {
                    "episodes": 2,
                    "warmup_steps": 8,
                    "checkpoint_every": 0,
                    "agent_config": {"hidden": [8, 8], "batch_size": 8, "n_samples": 4},
                },
            }
        )
    )
    assert main(["train", "--config", str(cfg), "--out", str(d / "train"), "--seed", "1"]) == 0
    return cfg, d / "train" / "checkpoint.pt"


@pytest.mark.parametrize("scenario", ["ptc-only", "pulse-only"])
def test_simulate_is_byte_identical(tmp_path, scenario):
    for name in ("a", "b"):
        argv = ["simulate", "--scenario", scenario, "--seed", "3", "--out", str(tmp_path / name), "--T0", "268.15"]
        assert main(argv) == 0
    a = (tmp_path / "a" / f"{scenario}_trace.csv").read_bytes()
    assert a == (tmp_path / "b" / f"{scenario}_trace.csv").read_bytes()
    assert a.startswith(b"t,applied_current,v_ptc")


def test_evaluate_is_byte_identical(tmp_path, quick):
    cfg, ckpt = quick
    for name in ("a", "b"):
        argv = ["evaluate", "--config", str(cfg), "--checkpoint", str(ckpt), "--episodes", "2", "--seed", "5", "--out", str(tmp_path / name)]
        assert main(argv) == 0
    for f in ("eval_000_trace.csv", "eval_001_trace.csv", "eval_stats.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    stats = json.loads((tmp_path / "a" / "eval_stats.json").read_text())
    assert stats["n_episodes"] == 2


def test_train_writes_metrics(quick):
    _, ckpt = quick
    assert ckpt.is_file()
    lines = (ckpt.parent / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("episode,") and len(lines) == 3


def test_train_resume_extends(tmp_path, quick):
    cfg, ckpt = quick
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path), "--episodes", "3", "--resume", str(ckpt)]) == 0
    assert (tmp_path / "metrics.csv").read_text().count("\n") == 4


def test_combined_without_checkpoint_fails_cleanly(tmp_path, capsys):
    assert main(["simulate", "--scenario", "combined-policy", "--out", str(tmp_path)]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_simulate_combined_with_checkpoint(tmp_path, quick):
    cfg, ckpt = quick
    assert main(["simulate", "--config", str(cfg), "--scenario", "combined-policy", "--checkpoint", str(ckpt), "--out", str(tmp_path), "--substeps"]) == 0
    report = json.loads((tmp_path / "combined-policy_report.json").read_text())
    assert report["basis"] == "cell"
    assert (tmp_path / "combined-policy_trace.csv").read_text().count("\n") > 100
