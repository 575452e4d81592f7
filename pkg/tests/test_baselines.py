import numpy as np
import pytest


def bump_like(interp, label):
    t = np.linspace(0.0, 1.0, 8)
    values = np.where(np.abs(t - 0.5) < 0.1, 1.0, 0.0) if label else np.zeros(8)
    return interp.TimeSeries(t, values, target=label)

@pytest.mark.parametrize("kind", ["RNN", "GRU"])
def test_baseline_steps_once_per_observation(baselines, interp, rng, kind):
    base = baselines.build_baseline(kind, "Binary", 1, 1, hidden_size=3, rng=rng)
    preds, steps, gates = base.predict_batch([bump_like(interp, 1), bump_like(interp, 0)])
    assert steps == [8, 8]
    assert all(0.0 < p[0] < 1.0 for p in preds)
    assert all(np.isnan(g) for g in gates)

def test_missing_values_read_as_zero(baselines, interp, rng):
    base = baselines.build_baseline("GRU", "Regression", 1, 1, hidden_size=3, rng=rng)
    t = np.linspace(0.0, 1.0, 4)
    with_gap = interp.TimeSeries(t, [1.0, np.nan, 2.0, 0.0], target=0.0)
    zero_filled = interp.TimeSeries(t, [1.0, 0.0, 2.0, 0.0], target=0.0)
    a, _, _ = base.predict_batch([with_gap])
    b, _, _ = base.predict_batch([zero_filled])
    np.testing.assert_allclose(a[0], b[0])

def test_baseline_gradient(baselines, interp, ad, rng):
    base = baselines.build_baseline("RNN", "Regression", 1, 1, hidden_size=2, rng=rng)
    s = interp.TimeSeries(np.linspace(0.0, 1.0, 5), np.linspace(-1.0, 1.0, 5), target=0.4)
    report = ad.grad_check(lambda p: baselines.loss("Regression", base._run(s, p), s.target), base.params)
    assert report.passed, report.worst

def test_baselines_do_not_forecast(baselines):
    with pytest.raises(ValueError):
        baselines.build_baseline("GRU", "Forecast", 1, 1)

def test_baseline_trains(baselines, training, interp):
    data = [bump_like(interp, k % 2) for k in range(8)]
    base = baselines.build_baseline("GRU", "Binary", 1, 1, hidden_size=3, rng=np.random.default_rng(0))
    cfg = training.TrainConfig(max_epochs=3, lr=0.05)
    result = training.train(base, data, data, cfg)
    assert len(result.history) == 3
    assert result.model.kind is baselines.BaselineKind.GRU
