import json

import pytest

from expleak.cli import main

CONFIG = {
    "name": "cli",
    "master_seed": 3,
    "dataset": {"kind": "synthetic", "num_classes": 4, "d": 8, "n": 400, "class_separation": 2.0},
    "split": {"n_train_target": 100, "n_test_target": 100, "n_train_shadow": 80, "n_test_shadow": 80},
    "target": {
        "architecture": "mlp_b",
        "epochs": 20,
        "learning_rate": 0.05,
        "weight_decay": 0.0,
        "schedule": "constant",
        "batch_size": 16,
    },
    "shadow": {
        "architecture": "mlp_b",
        "epochs": 20,
        "learning_rate": 0.05,
        "weight_decay": 0.0,
        "schedule": "constant",
        "batch_size": 16,
    },
    "explainers": ["saliency"],
    "attack": {"k_seeds": 2, "epsilon": 0.01},
    "hardening": {"trials": 2, "n_explore": 1},
    "sensitivity": {"draws": 4, "samples": 2},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(CONFIG))
    return path


def test_audit_success(config_path, tmp_path, capsys):
    code = main(["audit", "--config", str(config_path), "--out", str(tmp_path / "a")])
    assert code == 0
    assert (tmp_path / "a" / "audit_profile.csv").exists()


def test_flag_overrides(config_path, tmp_path):
    out = tmp_path / "b"
    code = main(["audit", "--config", str(config_path), "--out", str(out), "--epsilon", "0.05", "--k-seeds", "1"])
    assert code == 0
    report = json.loads((out / "attack_report_saliency.json").read_text())
    assert report["epsilon"] == 0.05
    assert len(report["per_seed"]) == 1


def test_missing_config_exit_2(tmp_path, capsys):
    code = main(["audit", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_bad_config_value_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**CONFIG, "attack": {"epsilon": 2.0}}))
    code = main(["audit", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 2


def test_runtime_failure_exit_3(tmp_path, capsys):
    # Infeasible split surfaces as a runtime (not config) failure.
    bad = tmp_path / "bad.json"
    bad.write_text(
        json.dumps({**CONFIG, "split": {**CONFIG["split"], "n_train_target": 10_000_000}})
    )
    code = main(["audit", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert code == 3


def test_harden_and_replay_and_verify(config_path, tmp_path):
    out = tmp_path / "h"
    assert main(["harden", "--config", str(config_path), "--out", str(out)]) == 0
    replay_dir = tmp_path / "h2"
    assert main(["harden", "--replay", str(out / "manifest.json"), "--out", str(replay_dir)]) == 0
    assert main(["verify-replay", str(out / "manifest.json"), str(replay_dir)]) == 0


def test_verify_replay_detects_tamper(config_path, tmp_path):
    out = tmp_path / "h3"
    assert main(["harden", "--config", str(config_path), "--out", str(out)]) == 0
    (out / "trials.csv").write_text("tampered")
    assert main(["verify-replay", str(out / "manifest.json"), str(out)]) == 3


def test_explain_and_report(config_path, tmp_path):
    ex = tmp_path / "ex"
    assert main(["explain", "--config", str(config_path), "--out", str(ex), "--sample", "2"]) == 0
    assert (ex / "attribution.xatt").exists()
    h = tmp_path / "h4"
    assert main(["harden", "--config", str(config_path), "--out", str(h)]) == 0
    rep = tmp_path / "rep"
    assert main(["report", str(h), "--out", str(rep)]) == 0
    assert (rep / "report.json").exists()


def test_output_root_env(config_path, tmp_path, monkeypatch):
    monkeypatch.setenv("EXPLEAK_OUT", str(tmp_path / "root"))
    code = main(["train", "--config", str(config_path)])
    assert code == 0
    assert (tmp_path / "root" / "cli-train" / "target.xlk").exists()
