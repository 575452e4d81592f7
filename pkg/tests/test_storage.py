import json

import numpy as np
import pytest


def test_binary_dataset_csv(storage, interp, tmp_path):
    data = [interp.TimeSeries([0.0, 0.5, 1.0], [[1.0], [np.nan], [3.0]], target=1),
            interp.TimeSeries([0.0, 1.0], [[2.0], [4.0]], target=0)]
    path = storage.write_dataset_csv(tmp_path / "d" / "train.csv", data, "Binary", {"split": "train"})
    text = path.read_text()
    assert text.startswith("# split=train\n")
    assert "NaN" in text
    meta, back = storage.read_dataset_csv(path)
    assert meta["task"] == "Binary" and meta["sequences"] == "2"
    assert [s.target for s in back] == [1, 0]
    np.testing.assert_array_equal(back[0].values, data[0].values)

def test_forecast_dataset_csv(storage, interp, tmp_path):
    s = interp.TimeSeries([0.0, 0.2], [[1.0], [2.0]], target=np.array([[5.0], [6.0]]), query_times=[0.1, 0.4])
    path = storage.write_dataset_csv(tmp_path / "f.csv", [s], "Forecast", {})
    _, cols, rows = storage.read_csv_with_provenance(path)
    assert cols == ["t", "x_1", "target_1"]
    assert [float(r[0]) for r in rows] == [0.0, 0.1, 0.2, 0.4]
    _, back = storage.read_dataset_csv(path)
    np.testing.assert_allclose(back[0].query_times, [0.1, 0.4])
    np.testing.assert_allclose(back[0].target, [[5.0], [6.0]])

def test_manifest_detects_tampering(storage, interp, tmp_path):
    data = [interp.TimeSeries([0.0, 1.0], [0.0, 1.0], target=0.5)]
    f = storage.write_dataset_csv(tmp_path / "train.csv", data, "Regression", {})
    manifest = storage.write_manifest(tmp_path / "manifest.json", {"kind": "SineMix"}, 3,
                                      {"train": f}, {"train": 1}, "abcd")
    assert storage.verify_manifest(manifest)
    assert json.loads(manifest.read_text())["config_hash"] == "abcd"
    f.write_text(f.read_text() + "0.0,0.0,0.0\n")
    assert not storage.verify_manifest(manifest)
    assert not storage.verify_manifest(tmp_path / "absent.json")

def test_history_lines(storage, tmp_path):
    writer = storage.HistoryWriter(tmp_path / "history.jsonl", "h1")
    writer({"epoch": 1, "val_metric": 0.5})
    writer({"epoch": 2, "val_metric": float("nan")})
    records = storage.read_history(tmp_path / "history.jsonl")
    assert [r["epoch"] for r in records] == [1, 2]
    assert records[1]["val_metric"] is None
    assert all(r["config_hash"] == "h1" for r in records)

def test_weights_file(storage, model, tmp_path, rng):
    m = model.build_model("AntiNF", "Binary", 2, 1, hidden_size=3, rng=rng)
    m = m.with_transform(model.Standardizer(np.array([1.0, 2.0]), np.array([3.0, 4.0])))
    path = storage.save_weights(tmp_path / "model.dntw", m, "0123456789abcdef")
    loaded = storage.load_weights(path)
    assert loaded.config_hash == "0123456789abcdef"
    assert loaded.model.kind is m.kind and loaded.model.task is m.task
    np.testing.assert_array_equal(loaded.model.params.flat(), m.params.flat())
    np.testing.assert_array_equal(loaded.model.transform.std, [3.0, 4.0])
    assert loaded.model.solver == m.solver

def test_corrupted_weights(storage, model, tmp_path):
    m = model.build_model("SyncNF", "Regression", 1, 1, hidden_size=2)
    blob = bytearray(storage.encode_weights(m, "hash"))
    blob[40] ^= 0xFF
    with pytest.raises(storage.DenotsError):
        storage.decode_weights(bytes(blob))
    with pytest.raises(storage.DenotsError):
        storage.decode_weights(b"not weights at all, clearly too short")
    with pytest.raises(storage.DenotsError):
        storage.load_weights(tmp_path / "missing.dntw")

def test_write_study(storage, tmp_path):
    rows = [{"delta": 0.1, "estimate": 1e-3}, {"delta": 0.2, "estimate": 2e-2, "note": {"a": 1}}]
    csv_path, json_path = storage.write_study(tmp_path, "spline-error", "feed", rows, {"passed": True})
    assert csv_path.name == "spline-error-feed.csv"
    _, cols, body = storage.read_csv_with_provenance(csv_path)
    assert cols == ["delta", "estimate", "note"]
    assert len(body) == 2
    summary = storage.read_json(json_path)
    assert summary == {"study": "spline-error", "passed": True, "config_hash": "feed"}
