import math

import numpy as np
import pytest


@pytest.mark.parametrize("kind,factor", [("NoNF", 0.5), ("SyncNF", -0.5), ("AntiNF", -0.5)])
def test_gru_fields_with_zero_weights(dynamics, ad, kind, factor):
    params = dynamics.zero_field_params(kind, 2, 3).constants()
    h = ad.tensor([1.0, -2.0, 0.5])
    out = dynamics.vector_field(kind, params, ad.tensor([0.3, 0.4]), h)
    np.testing.assert_allclose(out.data, factor * h.data)

def test_anti_feeds_the_gates_negated_state(dynamics, ad, rng):
    params = dynamics.init_field_params("AntiNF", 2, 3, rng).constants()
    x, h = ad.tensor([0.1, -0.2]), ad.tensor([0.5, 0.2, -0.4])
    _, z, n = dynamics.gru_gates(params, x, -h)
    expected = (1.0 - z.data) * n.data - z.data * h.data
    np.testing.assert_allclose(dynamics.vector_field("AntiNF", params, x, h).data, expected)

@pytest.mark.parametrize("kind", ["MlpTanh", "MlpRelu"])
def test_mlp_fields(dynamics, ad, rng, kind):
    params = dynamics.init_field_params(kind, 2, 3, rng)
    assert params.shapes["W_1"] == (3, 5)
    out = dynamics.vector_field(kind, params.constants(), ad.tensor([0.1, 0.2]), ad.tensor([0.0, 1.0, 2.0]))
    assert out.shape == (3,)
    if kind == "MlpTanh":
        assert np.all(np.abs(out.data) < 1.0)

def test_init_bounds(dynamics, rng):
    params = dynamics.init_field_params("NoNF", 3, 16, rng)
    assert params.names == list(dynamics.GRU_NAMES)
    assert np.abs(params.flat()).max() <= 1.0 / 4.0

def test_shape_errors(dynamics, ad):
    params = dynamics.zero_field_params("SyncNF", 2, 3).constants()
    with pytest.raises(ValueError):
        dynamics.vector_field("SyncNF", params, ad.tensor([0.1, 0.2, 0.3]), ad.zeros(3))

def test_gate_mean(dynamics, ad):
    params = dynamics.zero_field_params("SyncNF", 1, 2).constants()
    assert dynamics.gate_mean("SyncNF", params, ad.tensor([0.0]), ad.zeros(2)) == pytest.approx(0.5)
    mlp = dynamics.zero_field_params("MlpTanh", 1, 2).constants()
    assert math.isnan(dynamics.gate_mean("MlpTanh", mlp, ad.tensor([0.0]), ad.zeros(2)))

def test_scale_times(dynamics, interp):
    series = interp.TimeSeries([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], query_times=[3.0])
    scaled = dynamics.scale_times(series, dynamics.ScaleConfig(D=10.0, M=2.0))
    np.testing.assert_allclose(scaled.times, [0.0, 5.0, 10.0])
    np.testing.assert_allclose(scaled.query_times, [15.0])
    np.testing.assert_allclose(scaled.values, series.values)

@pytest.mark.parametrize("D,M", [(0.0, 1.0), (1.0, 0.0), (-1.0, 2.0)])
def test_scale_validation(dynamics, D, M):
    with pytest.raises(ValueError):
        dynamics.ScaleConfig(D, M)

def test_numpy_field_matches_tensor_field(dynamics, interp, ad, rng):
    params = dynamics.init_field_params("SyncNF", 1, 3, rng)
    path = interp.fit_natural_spline(interp.TimeSeries([0.0, 1.0, 2.0], [0.0, 1.0, 0.0]))
    g = dynamics.numpy_field("SyncNF", params, path)
    h = np.array([0.1, 0.2, 0.3])
    expected = dynamics.vector_field("SyncNF", params.constants(), ad.tensor(path.eval(0.7)), ad.tensor(h))
    np.testing.assert_allclose(g(0.7, h), expected.data)

def test_sync_field_keeps_the_state_in_the_box(dynamics, interp, solver, config, rng):
    params = dynamics.init_field_params("SyncNF", 1, 4, rng)
    params = params.replace(b_in=np.full(4, 5.0))
    path = interp.fit_natural_spline(interp.TimeSeries(np.linspace(0, 50, 11), rng.normal(size=11)))
    cfg = config.SolverConfig(rtol=1e-8, atol=1e-10)
    res = solver.integrate(dynamics.numpy_field("SyncNF", params, path), np.zeros(4), (0.0, 50.0), cfg)
    _, hs = res.trajectory_array()
    assert np.abs(hs).max() <= 1.0 + 1e-6

def test_lipschitz_budget(dynamics):
    assert dynamics.lipschitz_budget(1.0, 1.0, 1.0) == pytest.approx(math.e - 1.0)
    M_h = dynamics.hidden_lipschitz_for_budget(10.0, 1.0, 1.0)
    assert dynamics.lipschitz_budget(1.0, M_h, 1.0) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        dynamics.hidden_lipschitz_for_budget(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        dynamics.lipschitz_budget(1.0, 0.0, 1.0)

def test_scalar_update_gate_worked_example(dynamics, ad):
    params = dynamics.zero_field_params("NoNF", 1, 1).replace(b_iz=[math.log(3.0)]).constants()
    x, h = ad.tensor([0.7]), ad.tensor([2.0])
    _, z, n = dynamics.gru_gates(params, x, h)
    assert z.data[0] == pytest.approx(0.75)
    assert n.data[0] == pytest.approx(0.0)
    assert dynamics.vector_field("NoNF", params, x, h).data[0] == pytest.approx(1.5)

def test_saturated_anti_gate_pulls_toward_minus_h(dynamics, ad, rng):
    params = dynamics.init_field_params("AntiNF", 2, 3, rng).replace(
        W_iz=np.zeros((3, 2)), W_hz=np.zeros((3, 3)), b_hz=np.zeros(3), b_iz=np.full(3, 20.0))
    h = ad.tensor(rng.uniform(-1.0, 1.0, 3))
    g = dynamics.vector_field("AntiNF", params.constants(), ad.tensor(rng.normal(size=2)), h)
    assert np.linalg.norm(g.data + h.data) < 1e-6
