import numpy as np
import pytest


def test_r2(metrics):
    y = np.array([1.0, 2.0, 3.0, 4.0])
    assert metrics.r2(y, y) == 1.0
    assert metrics.r2(np.full(4, y.mean()), y) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        metrics.r2(np.ones(3), np.ones(3))

@pytest.mark.parametrize(
    "scores,labels,expected",
    [
        ([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], 1.0),
        ([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1], 0.0),
        ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
        ([0.1, 0.6, 0.4, 0.9], [0, 0, 1, 1], 0.75),
    ],
)
def test_auroc(metrics, scores, labels, expected):
    assert metrics.auroc(scores, labels) == pytest.approx(expected)

def test_auroc_needs_both_classes(metrics):
    with pytest.raises(ValueError):
        metrics.auroc([0.1, 0.2], [1, 1])

def test_accuracy(metrics):
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]])
    assert metrics.accuracy(probs, [0, 1, 1]) == pytest.approx(2 / 3)

def test_metric_dispatch(metrics):
    assert metrics.metric("Binary", [np.array([0.2]), np.array([0.7])], [0, 1]) == 1.0
    assert metrics.metric("Forecast", [np.array([[1.0], [2.0]]), np.array([[3.0]])],
                          [np.array([[1.0], [2.0]]), np.array([[3.0]])]) == 1.0
    assert metrics.METRIC_NAME[metrics.TaskKind.MULTICLASS] == "accuracy"

def test_correlation(metrics):
    x = [1.0, 2.0, 3.0, 4.0]
    assert metrics.correlation(x, [2.0, 4.0, 6.0, 8.0]) == pytest.approx(1.0)
    assert metrics.correlation(x, [1.0, 8.0, 27.0, 64.0], "spearman") == pytest.approx(1.0)
    assert metrics.correlation(x, [4.0, 3.0, 2.0, 1.0], "spearman") == pytest.approx(-1.0)

@pytest.mark.parametrize("xs,ys", [([1.0, 2.0], [1.0, 2.0]), ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])])
def test_correlation_undefined(metrics, xs, ys):
    with pytest.raises(ValueError):
        metrics.correlation(xs, ys)

def test_spearman_worked_example(metrics):
    assert metrics.correlation([1.0, 2.0, 3.0], [3.0, 1.0, 2.0], "spearman") == pytest.approx(-0.5)
