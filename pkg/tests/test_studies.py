import json
import math

import numpy as np
import pytest


def test_registry_and_defaults(studies):
    assert set(studies.STUDIES) == {"iss", "forgetting", "spline-error", "assumption-mc", "robustness",
                                    "nfe-sweep", "norm-study", "sinemix-bench", "l2-vs-scale", "bump-scale",
                                    "attack-ordering"}
    assert studies.default_config("sinemix-bench").dataset.kind.value == "SineMix"
    assert studies.default_config("bump-scale").dataset.kind.value == "Bump"
    assert studies.default_config("attack-ordering").dataset.kind.value == "Pendulum"
    assert studies.default_config("iss").dataset.kind.value == "Bump"
    with pytest.raises(ValueError) as err:
        studies.run_study("nope", studies.default_config("iss"))
    assert "robustness" in str(err.value)

def test_iss_study(studies, tiny_config):
    report = studies.run_study("iss", tiny_config)
    assert report.passed
    assert len(report.rows) == 2
    assert report.summary["violations"] == 0
    assert report.summary["worst_ratio_to_level"] <= 1.0

def test_forgetting_study(studies, tiny_config):
    report = studies.forgetting_study(tiny_config)
    assert report.summary["non_monotone"] == 0
    assert report.summary["pure_decay_max_error"] <= 1e-5
    assert report.summary["anti_slower_than_sync"]
    assert report.passed
    assert set(report.chart.curves) == {"SyncNF", "AntiNF"}

def test_robustness_study(studies, tiny_config):
    report = studies.robustness_study(tiny_config)
    assert report.summary["tightness_gap"] == pytest.approx(4.0, rel=0.05)
    assert report.summary["random_configs"] == 2
    assert all(r["within_bounds"] for r in report.rows)
    assert report.passed

def test_assumption_mc_study_rows(studies, config, tiny_config):
    cfg = config.apply_overrides(tiny_config, {"verify.iterations": 5})
    report = studies.assumption_mc_study(cfg)
    assert report.summary["iterations"] == 5
    assert len(report.rows) + report.summary["skipped"] == 5
    assert {"n", "r", "split", "query", "margin"} <= set(report.rows[0])

def test_point_config(studies, config, tiny_config):
    by_scale = studies.point_config(tiny_config, "scale", 5.0, "NoNF")
    assert by_scale.scale.D == 5.0 and by_scale.model.field is config.FieldKind.NONF
    by_tol = studies.point_config(by_scale, "tolerance", 1e-5, "AntiNF")
    assert by_tol.solver.rtol == by_tol.solver.atol == 1e-5
    assert by_tol.scale.D == 1.0
    assert studies.point_key("AntiNF", "tolerance", 1e-5) == "AntiNF-tolerance-1e-05"

def test_sweep_needs_two_points(studies, tiny_config):
    with pytest.raises(ValueError):
        studies.sweep(tiny_config, "scale", [1.0], ["AntiNF"])

def test_sweep_resumes_from_the_manifest(studies, tiny_config, tmp_path, monkeypatch):
    store = tmp_path / "sweep"
    rows, summary = studies.sweep(tiny_config, "scale", [1.0, 2.0], ["AntiNF"], store=store)
    assert [r["value"] for r in rows] == [1.0, 2.0]
    assert all(r["status"] == "ok" and r["nfe"] > 0 for r in rows)
    assert json.loads((store / "manifest.json").read_text())["completed"] == ["AntiNF-scale-1", "AntiNF-scale-2"]
    assert summary["AntiNF"]["points"] == 2
    assert math.isnan(summary["AntiNF"]["pearson"])
    assert summary["AntiNF"]["selected_value"] in (1.0, 2.0)

    def fail(payload):
        raise AssertionError(f"point {payload['key']} should have been skipped")

    monkeypatch.setattr(studies, "train_point", fail)
    again, _ = studies.sweep(tiny_config, "scale", [1.0, 2.0], ["AntiNF"], store=store)
    assert [r["metric"] for r in again] == [r["metric"] for r in rows]

def test_diverged_points_are_recorded(studies, tiny_config, monkeypatch):
    def diverge(cfg, *args, **kwargs):
        raise studies.DivergenceError("boom")

    monkeypatch.setattr(studies, "run_experiment", diverge)
    payload = {"key": "k", "axis": "scale", "value": 1.0, "config": tiny_config.model_dump(mode="json")}
    row = studies.train_point(payload)
    assert row["status"] == "diverged" and math.isnan(row["metric"])
    with pytest.raises(studies.DivergenceError):
        studies.sweep(tiny_config, "scale", [1.0, 2.0], ["AntiNF"])

def test_correlations_with_enough_points(studies):
    rows = [{"status": "ok", "nfe": n, "metric": m, "val_metric": m, "value": v}
            for v, (n, m) in enumerate([(10, 0.5), (20, 0.6), (40, 0.8), (80, 0.9)])]
    rows.append({"status": "diverged", "nfe": float("nan"), "metric": float("nan")})
    out = studies._correlations(rows)
    assert out["points"] == 5 and out["diverged"] == 1
    assert out["spearman"] == pytest.approx(1.0)
    assert out["pearson"] > 0.9
    assert out["selected_value"] == 3

def test_l2_norm_untrained_is_scale_free(studies, config, tiny_config):
    cfg = config.apply_overrides(tiny_config, {"verify.scales": [1.0, 5.0, 20.0]})
    report = studies.l2_norm_vs_scale(cfg, trained=False)
    assert report.summary["untrained_identical"]
    assert report.passed
    assert [r["D"] for r in report.rows] == [1.0, 5.0, 20.0]

def test_trajectory_norms(studies, training, tiny_config):
    train_set, _, test_set = training.prepare_splits(tiny_config)
    model = training.build_for(tiny_config, train_set)
    stats = studies.trajectory_norms(model, test_set)
    assert stats["diverged"] == 0
    assert 0.0 < stats["sup_norm"]
    assert stats["max_abs"] <= stats["sup_norm"]

def test_bump_scale_compares_three_variants(studies, tiny_config, monkeypatch):
    scores = {"scale-1": 0.7, "tolerance-1e-06": 0.8, "scale-20": 0.97}

    def fake(payload):
        metric = scores[f"{payload['axis']}-{payload['value']:g}"]
        return {"key": payload["key"], "status": "ok", "nfe": 10.0 * metric, "metric": metric}

    monkeypatch.setattr(studies, "train_point", fake)
    report = studies.bump_scale_study(tiny_config)
    assert [r["variant"] for r in report.rows] == ["default", "tolerance", "scale"]
    assert report.summary["gain"] == pytest.approx(0.27)
    assert report.summary["field"] == "MlpTanh"
    assert report.passed

    scores["scale-20"] = 0.9
    assert not studies.bump_scale_study(tiny_config).passed

def test_attack_ordering_rows(studies, config, tiny_config):
    cfg = config.apply_overrides(tiny_config, {"dataset.kind": "Pendulum", "attack.seeds": 2})
    report = studies.attack_ordering_study(cfg)
    assert len(report.rows) == 6
    assert {r["field"] for r in report.rows} == {"SyncNF", "AntiNF", "NoNF"}
    assert all(r["fraction"] == 0.01 for r in report.rows)
    assert set(report.summary["checks"]) == {"SyncNF_beats_NoNF", "AntiNF_beats_NoNF"}
    assert report.summary["attack"] == "Change"

def test_run_jobs_preserves_order(studies):
    assert studies.run_jobs(abs, [-3, 2, -1]) == [3, 2, 1]

def test_norm_study_random_init(studies, config, tiny_config):
    cfg = config.apply_overrides(tiny_config, {"verify.trained": False})
    report = studies.trajectory_norm_study(cfg, n_series=2)
    assert report.summary["sync_in_box"]
    assert report.summary["anti_no_divergence"]
    assert report.summary["modes"] == ["random"]

@pytest.mark.slow
def test_spline_error_study(studies):
    report = studies.run_study("spline-error", studies.default_config("spline-error"))
    assert 3.5 <= report.summary["exponent"] <= 4.5
    assert report.passed

@pytest.mark.slow
def test_assumption_mc_study(studies):
    report = studies.run_study("assumption-mc", studies.default_config("assumption-mc"))
    assert report.summary["failures"] == 0
    assert report.passed

@pytest.mark.slow
def test_norm_study(studies, config):
    cfg = config.apply_overrides(studies.default_config("norm-study"), {"verify.seeds": 1})
    report = studies.run_study("norm-study", cfg)
    assert report.summary["nonf_growth"]
    assert report.passed

@pytest.mark.slow
def test_sinemix_memory_bench(studies, config):
    cfg = config.apply_overrides(studies.default_config("sinemix-bench"), {"verify.seeds": 1})
    report = studies.run_study("sinemix-bench", cfg, workers=5)
    assert report.summary["checks"]["AntiNF"]
    assert report.passed

@pytest.mark.slow
def test_nfe_sweep_study(studies):
    report = studies.run_study("nfe-sweep", studies.default_config("nfe-sweep"), workers=4)
    assert report.summary["correlations"]["AntiNF"]["pearson"] >= 0.7
    assert report.passed

@pytest.mark.slow
def test_bump_scale_study(studies):
    report = studies.run_study("bump-scale", studies.default_config("bump-scale"), workers=3)
    assert report.summary["gain"] >= 0.10
    assert report.summary["mean_metric"]["scale"] >= 0.92
    assert report.passed

@pytest.mark.slow
def test_attack_ordering_study(studies):
    report = studies.run_study("attack-ordering", studies.default_config("attack-ordering"), workers=3)
    means = report.summary["mean_r2"]
    assert means["SyncNF"] > means["NoNF"]
    assert means["AntiNF"] > means["NoNF"]
    assert report.passed
