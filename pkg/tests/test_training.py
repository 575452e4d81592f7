import numpy as np
import pytest


def test_first_adam_step_moves_by_the_learning_rate(training, ad):
    params = ad.ParamSet({"w": np.array([1.0, -1.0])})
    state = training.AdamState.for_params(params, lr=0.1)
    out = training.adam_step(state, params, np.array([2.0, -0.5]))
    np.testing.assert_allclose(out["w"], [0.9, -0.9], atol=1e-6)
    assert state.step == 1

def test_adam_minimizes_a_quadratic(training, ad):
    params = ad.ParamSet({"w": np.array([3.0, -2.0])})
    state = training.AdamState.for_params(params, lr=0.01)
    for _ in range(3000):
        params = training.adam_step(state, params, {"w": 2.0 * params["w"]})
    np.testing.assert_allclose(params["w"], [0.0, 0.0], atol=5e-2)

def test_adam_shape_check(training, ad):
    params = ad.ParamSet({"w": np.zeros(2)})
    state = training.AdamState.for_params(params)
    with pytest.raises(ValueError):
        training.adam_step(state, params, np.zeros(3))

@pytest.mark.parametrize("fraction,expected", [(1.0, 10), (0.5, 5), (0.01, 1), (0.25, 3)])
def test_subset_size(training, interp, rng, fraction, expected):
    data = [interp.TimeSeries([0.0, 1.0], [float(i), 0.0]) for i in range(10)]
    picked = training.subset(data, fraction, rng)
    assert len(picked) == expected
    firsts = [s.values[0, 0] for s in picked]
    assert firsts == sorted(firsts)

def test_subset_rejects_bad_fraction(training, rng):
    with pytest.raises(ValueError):
        training.subset([], 0.0, rng)

@pytest.mark.parametrize(
    "task,target,expected",
    [("Binary", 1, 1), ("Regression", 0.5, 1), ("Regression", [0.1, 0.2], 2), ("Forecast", np.zeros((4, 3)), 3)],
)
def test_output_size(training, interp, task, target, expected):
    s = interp.TimeSeries([0.0, 1.0], [0.0, 1.0], target=target)
    assert training.output_size(task, [s]) == expected

def test_output_size_multiclass(training, interp):
    data = [interp.TimeSeries([0.0, 1.0], [0.0, 1.0], target=k) for k in (0, 3, 1)]
    assert training.output_size("Multiclass", data) == 4

def test_prepare_splits_is_deterministic(training, tiny_config):
    a = training.prepare_splits(tiny_config)
    b = training.prepare_splits(tiny_config)
    assert [len(p) for p in a] == [16, 2, 2]
    for part_a, part_b in zip(a, b):
        for x, y in zip(part_a, part_b):
            np.testing.assert_array_equal(x.values, y.values)
    assert sorted(s.target for s in a[1]) == [0, 1]

def test_train_records_history(training, tiny_config):
    train_set, val_set, _ = training.prepare_splits(tiny_config)
    model = training.build_for(tiny_config, train_set)
    records = []
    cfg = tiny_config.train.model_copy(update={"max_epochs": 2})
    result = training.train(model, train_set, val_set, cfg, np.random.default_rng(0), records.append)
    assert [r["epoch"] for r in result.history] == [1, 2]
    assert records == result.history
    assert result.best_epoch in (1, 2)
    assert set(result.history[0]) == {"epoch", "train_loss", "val_metric", "nfe_mean"}

def test_divergence_carries_history(training, tiny_config, monkeypatch):
    train_set, val_set, _ = training.prepare_splits(tiny_config)
    model = training.build_for(tiny_config, train_set)

    def nan_loss(self, batch):
        return float("nan"), np.zeros(self.params.size), [1]

    monkeypatch.setattr(type(model), "loss_and_grad", nan_loss)
    with pytest.raises(training.DivergenceError) as err:
        training.train(model, train_set, val_set, tiny_config.train)
    assert err.value.history == []

def test_run_experiment(training, tiny_config):
    exp = training.run_experiment(tiny_config)
    assert exp.test.metric_name == "auroc"
    assert 0.0 <= exp.test.metric <= 1.0
    assert exp.test.nfe_mean > 0
    assert 0.0 < exp.test.gate_mean < 1.0
    assert len(exp.history) == 1
    assert exp.model.transform is not None

def test_evaluate_empty_split(training, model):
    m = model.build_model("AntiNF", "Regression", 1, 1, hidden_size=2)
    with pytest.raises(ValueError):
        training.evaluate(m, [])

def _scripted_evaluate(training, metrics, seen):
    values = iter(metrics)

    def fake(model, series):
        seen.append(model.params)
        return training.Evaluation(next(values), "auroc", 1.0, float("nan"))

    return fake

def test_frozen_validation_metric_stops_after_patience(training, tiny_config, monkeypatch):
    train_set, val_set, _ = training.prepare_splits(tiny_config)
    model = training.build_for(tiny_config, train_set)
    seen = []
    monkeypatch.setattr(training, "evaluate", _scripted_evaluate(training, [0.5] * 10, seen))
    cfg = tiny_config.train.model_copy(update={"max_epochs": 10, "patience": 1})
    result = training.train(model, train_set, val_set, cfg, np.random.default_rng(0))
    assert [r["epoch"] for r in result.history] == [1, 2]
    assert (result.best_epoch, result.best_metric) == (1, 0.5)

def test_best_epoch_weights_are_restored(training, tiny_config, monkeypatch):
    train_set, val_set, _ = training.prepare_splits(tiny_config)
    model = training.build_for(tiny_config, train_set)
    seen = []
    monkeypatch.setattr(training, "evaluate", _scripted_evaluate(training, [0.3, 0.6, 0.6, 0.4, 0.9], seen))
    cfg = tiny_config.train.model_copy(update={"max_epochs": 10, "patience": 2})
    result = training.train(model, train_set, val_set, cfg, np.random.default_rng(0))
    assert len(result.history) == 4
    assert result.best_epoch == 2
    np.testing.assert_array_equal(result.model.params.flat(), seen[1].flat())
    assert not np.array_equal(result.model.params.flat(), seen[-1].flat())

def test_seeded_training_is_reproducible(training, tiny_config):
    train_set, val_set, _ = training.prepare_splits(tiny_config)
    cfg = tiny_config.train.model_copy(update={"max_epochs": 2})
    runs = [training.train(training.build_for(tiny_config, train_set), train_set, val_set, cfg,
                           np.random.default_rng(11)) for _ in range(2)]
    assert runs[0].history == runs[1].history
    np.testing.assert_array_equal(runs[0].model.params.flat(), runs[1].model.params.flat())

def test_run_experiment_on_given_splits(training, tiny_config):
    splits = training.prepare_splits(tiny_config)
    given = training.run_experiment(tiny_config, splits=splits)
    fresh = training.run_experiment(tiny_config)
    assert given.history == fresh.history
    assert given.test.metric == fresh.test.metric
