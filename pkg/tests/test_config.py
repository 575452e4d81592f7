import json
import pytest


def test_defaults(config):
    cfg = config.parse_config({"dataset": {"kind": "Bump"}})
    assert cfg.model.field is config.FieldKind.ANTINF
    assert cfg.scale.D == 1.0 and cfg.scale.M is None
    assert cfg.solver.rtol == 1e-3 and cfg.solver.atol == 1e-3
    assert cfg.train.batch_size == 64 and cfg.train.patience == 10 and cfg.train.lr == 1e-3

@pytest.mark.parametrize(
    "kind,task",
    [("Bump", "Binary"), ("SineMix", "Regression"), ("Sine2", "Forecast"),
     ("Pendulum", "Regression"), ("PendulumAngles", "Forecast")],
)
def test_default_task_per_dataset(config, kind, task):
    assert config.parse_config({"dataset": {"kind": kind}}).task_kind.value == task

def test_missing_kind_names_the_key(config):
    with pytest.raises(config.ConfigError) as err:
        config.parse_config({"dataset": {}})
    assert err.value.key == "dataset.kind"
    assert "dataset.kind" in str(err.value)

@pytest.mark.parametrize(
    "data",
    [
        {"dataset": {"kind": "Bump"}, "unknown": 1},
        {"dataset": {"kind": "Nope"}},
        {"dataset": {"kind": "Bump", "split": [0.5, 0.5, 0.5]}},
        {"dataset": {"kind": "Bump"}, "scale": {"D": 0}},
        {"dataset": {"kind": "Bump"}, "solver": {"adaptive": False}},
        {"dataset": {"kind": "Bump"}, "attack": {"fractions": [1.5]}},
    ],
)
def test_invalid_configs(config, data):
    with pytest.raises(config.ConfigError):
        config.parse_config(data)

def test_load_config_errors(config, tmp_path):
    with pytest.raises(config.ConfigError):
        config.load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(config.ConfigError):
        config.load_config(bad)
    listy = tmp_path / "list.json"
    listy.write_text("[]", encoding="utf-8")
    with pytest.raises(config.ConfigError):
        config.load_config(listy)

def test_save_and_load(config, tmp_path):
    cfg = config.parse_config({"dataset": {"kind": "SineMix"}, "seed": 7, "scale": {"D": 20}})
    path = config.save_config(cfg, tmp_path / "nested" / "cfg.json")
    assert json.loads(path.read_text())["seed"] == 7
    assert config.load_config(path) == cfg

def test_overrides(config):
    cfg = config.parse_config({"dataset": {"kind": "Bump"}})
    out = config.apply_overrides(cfg, {"seed": 3, "scale.D": 10, "out_dir": None})
    assert out.seed == 3 and out.scale.D == 10.0 and out.out_dir == cfg.out_dir
    with pytest.raises(config.ConfigError):
        config.apply_overrides(cfg, {"scale.X": 1})
    with pytest.raises(config.ConfigError):
        config.apply_overrides(cfg, {"seed.inner": 1})

def test_config_hash(config):
    cfg = config.parse_config({"dataset": {"kind": "Bump"}})
    digest = config.config_hash(cfg)
    assert len(digest) == 16
    assert config.config_hash(config.apply_overrides(cfg, {"out_dir": "elsewhere"})) == digest
    assert config.config_hash(config.apply_overrides(cfg, {"seed": 1})) != digest

def test_substreams_are_named_and_reproducible(config):
    a = config.substream(5, "init").integers(2**31, size=4)
    b = config.substream(5, "init").integers(2**31, size=4)
    c = config.substream(5, "shuffle").integers(2**31, size=4)
    assert (a == b).all()
    assert (a != c).any()

def test_dataset_seed_follows_root_seed(config):
    a = config.parse_config({"dataset": {"kind": "Bump"}, "seed": 1})
    b = config.parse_config({"dataset": {"kind": "Bump"}, "seed": 2})
    pinned = config.parse_config({"dataset": {"kind": "Bump", "seed": 99}, "seed": 1})
    assert a.dataset_seed != b.dataset_seed
    assert pinned.dataset_seed == 99

def test_worker_count(config, monkeypatch):
    monkeypatch.delenv(config.WORKERS_ENV, raising=False)
    assert config.worker_count() == 1
    assert config.worker_count(4) == 4
    monkeypatch.setenv(config.WORKERS_ENV, "3")
    assert config.worker_count() == 3
    monkeypatch.setenv(config.WORKERS_ENV, "many")
    with pytest.raises(config.ConfigError):
        config.worker_count()
    with pytest.raises(config.ConfigError):
        config.worker_count(0)
