import json

import numpy as np
import pytest


@pytest.fixture
def config_file(config, tiny_config, tmp_path):
    return str(config.save_config(tiny_config, tmp_path / "tiny.json"))

def test_version(cli, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
    assert cli.__version__ in capsys.readouterr().out

def test_no_command_prints_help(cli, capsys):
    assert cli.main([]) == 0
    assert "verify" in capsys.readouterr().out

def test_bad_log_level(cli, capsys):
    assert cli.main(["--log-level", "LOUD", "verify", "iss"]) == 1
    assert "LOUD" in capsys.readouterr().err

def test_unknown_study(cli, capsys):
    assert cli.main(["verify", "nope"]) == 1
    assert "available" in capsys.readouterr().err

@pytest.mark.parametrize("payload,key", [
    ({"dataset": {}}, "dataset.kind"),
    ({"dataset": {"kind": "Bump"}, "solver": {"rtol": -1}}, "solver.rtol"),
])
def test_invalid_config_exits_1(cli, tmp_path, capsys, payload, key):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    assert cli.main(["generate", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert key in capsys.readouterr().err

def test_generate_is_idempotent(cli, config, tiny_config, config_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["generate", "--config", config_file, "--out", str(out)]) == 0
    data = out / f"run-{config.config_hash(tiny_config)}" / "data"
    manifest = json.loads((data / "manifest.json").read_text())
    assert {k: v["size"] for k, v in manifest["splits"].items()} == {"train": 16, "val": 2, "test": 2}
    before = (data / "train.csv").stat().st_mtime_ns
    assert cli.main(["generate", "--config", config_file, "--out", str(out)]) == 0
    assert (data / "train.csv").stat().st_mtime_ns == before

def test_train_then_attack(cli, config, storage, tiny_config, config_file, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["train", "--config", config_file, "--out", str(out)]) == 0
    run = out / f"run-{config.config_hash(tiny_config)}"
    metrics = json.loads((run / "metrics.json").read_text())
    assert metrics["metric"] == "auroc" and "auroc" in metrics
    assert metrics["nfe_mean"] > 0
    assert (run / "model.dntw").exists()
    assert [r["epoch"] for r in storage.read_history(run / "history.jsonl")] == [1]
    assert config.config_hash(config.load_config(run / "config.json")) == run.name[len("run-"):]

    args = ["attack", "--config", config_file, "--out", str(out), "--kind", "Drop",
            "--fractions", "0,0.5", "--seeds", "2"]
    assert cli.main(args) == 0
    [csv_path] = out.glob("attack-drop-*.csv")
    assert len([line for line in csv_path.read_text().splitlines() if not line.startswith("#")]) == 3

def test_written_splits_read_back_as_generated(cli, config, storage, training, tiny_config, tmp_path):
    cfg = config.apply_overrides(tiny_config, {"out_dir": str(tmp_path)})
    manifest = cli.write_dataset(cfg)
    for disk, fresh in zip(storage.load_splits(manifest), training.prepare_splits(cfg)):
        assert len(disk) == len(fresh)
        for a, b in zip(disk, fresh):
            np.testing.assert_array_equal(a.times, b.times)
            np.testing.assert_array_equal(a.values, b.values)
            assert a.target == b.target
    val = manifest.parent / "val.csv"
    val.write_text(val.read_text() + "0.0,0.0,1\n")
    with pytest.raises(storage.DenotsError):
        storage.load_splits(manifest)

def test_attack_without_model(cli, config_file, tmp_path):
    assert cli.main(["attack", "--config", config_file, "--out", str(tmp_path)]) == 1

def test_sweep_single_value_grid(cli, config_file, tmp_path):
    assert cli.main(["sweep", "--config", config_file, "--out", str(tmp_path), "--grid", "1"]) == 1

def test_verify_writes_summary(cli, config, tiny_config, config_file, tmp_path):
    assert cli.main(["verify", "iss", "--config", config_file, "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / f"iss-{config.config_hash(tiny_config)}.json").read_text())
    assert summary["study"] == "iss"
    assert summary["passed"] is True
    assert summary["configs"] == 2

def test_failed_study_exits_3(cli, studies, monkeypatch, config_file, tmp_path):
    failing = studies.StudyReport("iss", [{"x": 1}], {"passed": False}, False)
    monkeypatch.setitem(studies.STUDIES, "iss", lambda cfg, workers: failing)
    assert cli.main(["verify", "iss", "--config", config_file, "--out", str(tmp_path)]) == 3
