import math

import numpy as np
import pytest


def decay(t, h):
    return -h

def rotate(t, h):
    return np.array([-h[1], h[0]])

def test_adaptive_exponential_decay(solver, config):
    res = solver.integrate(decay, np.array([1.0]), (0.0, 1.0))
    assert res.final[0] == pytest.approx(math.exp(-1.0), abs=1e-2)
    assert res.accepted > 0
    assert res.nfe == 1 + 6 * (res.accepted + res.rejected)

def test_fixed_step_counts(solver, config):
    cfg = config.SolverConfig(adaptive=False, step_size=0.1)
    res = solver.integrate(decay, np.array([1.0]), (0.0, 1.0), cfg)
    assert res.accepted == 10 and res.rejected == 0
    assert res.nfe == 61

def test_fifth_order_convergence(solver, config):
    def error(step):
        cfg = config.SolverConfig(adaptive=False, step_size=step)
        return abs(solver.integrate(decay, np.array([1.0]), (0.0, 1.0), cfg).final[0] - math.exp(-1.0))

    errors = [error(step) for step in (0.2, 0.1, 0.05, 0.025)]
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    assert min(ratios) >= 16.0, ratios

def test_tight_tolerance_on_oscillator(solver, config):
    cfg = config.SolverConfig(rtol=1e-10, atol=1e-12)
    res = solver.integrate(rotate, np.array([1.0, 0.0]), (0.0, 2 * math.pi), cfg)
    np.testing.assert_allclose(res.final, [1.0, 0.0], atol=1e-7)

def test_output_times_are_hit_exactly(solver, config):
    times = (0.25, 0.5, 0.75, 1.0)
    cfg = config.SolverConfig(rtol=1e-8, atol=1e-10, output_times=times)
    res = solver.integrate(decay, np.array([1.0]), (0.0, 1.0), cfg)
    assert res.times == times
    np.testing.assert_allclose(res.sample_values()[:, 0], np.exp(-np.array(times)), rtol=1e-6)
    ts, hs = res.trajectory_array()
    assert set(times) <= set(ts.tolist())
    assert hs.shape == (ts.size, 1)

def test_output_times_outside_span(solver, config):
    cfg = config.SolverConfig(output_times=(0.5, 2.0))
    with pytest.raises(ValueError):
        solver.integrate(decay, np.array([1.0]), (0.0, 1.0), cfg)

@pytest.mark.parametrize("span", [(1.0, 1.0), (1.0, 0.0)])
def test_empty_span(solver, span):
    with pytest.raises(ValueError):
        solver.integrate(decay, np.array([1.0]), span)

def test_non_finite_field_reports_partial_result(solver):
    def blow_up(t, h):
        return h * np.inf if t > 0.5 else -h

    with pytest.raises(solver.SolverError) as err:
        solver.integrate(blow_up, np.array([1.0]), (0.0, 1.0))
    assert err.value.t > 0.5
    assert err.value.partial.accepted > 0
    assert err.value.exit_code == 2

def test_step_limit(solver, config):
    cfg = config.SolverConfig(max_steps=3)
    with pytest.raises(solver.SolverError):
        solver.integrate(decay, np.array([1.0]), (0.0, 100.0), cfg)

def test_dopri5_step_reuses_last_stage(solver):
    first = solver.dopri5_step(decay, 0.0, np.array([1.0]), 0.1)
    second = solver.dopri5_step(decay, 0.1, first.y, 0.1, first.k_last)
    assert (first.nfe, second.nfe) == (7, 6)
    with pytest.raises(ValueError):
        solver.dopri5_step(decay, 0.0, np.array([1.0]), 0.0)

def test_gradient_through_the_solver(solver, config, ad):
    tape = ad.Tape()
    rate = tape.leaf("rate", np.array([1.0]))

    def f(t, h):
        return -(rate * h)

    cfg = config.SolverConfig(rtol=1e-9, atol=1e-11)
    res = solver.integrate(f, ad.tensor([1.0]), (0.0, 1.0), cfg)
    grads = tape.backward(ad.sum(res.final))
    # d/da exp(-a) at a = 1
    assert grads["rate"][0] == pytest.approx(-math.exp(-1.0), rel=1e-5)

def test_nfe_falls_as_tolerance_loosens(solver, config):
    nfes = [solver.integrate(rotate, np.array([1.0, 0.0]), (0.0, 2 * math.pi),
                             config.SolverConfig(rtol=rtol, atol=rtol * 1e-2)).nfe
            for rtol in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2)]
    assert all(a >= b for a, b in zip(nfes, nfes[1:])), nfes
    assert nfes[0] > nfes[-1]

def test_restarting_halfway_matches_one_solve(solver, config):
    cfg = config.SolverConfig(rtol=1e-10, atol=1e-12)
    T = 3.0
    whole = solver.integrate(rotate, np.array([1.0, 0.0]), (0.0, T), cfg)
    half = solver.integrate(rotate, np.array([1.0, 0.0]), (0.0, T / 2), cfg)
    rest = solver.integrate(rotate, half.final, (T / 2, T), cfg)
    np.testing.assert_allclose(rest.final, whole.final, atol=1e-8)
    np.testing.assert_allclose(whole.final, [math.cos(T), math.sin(T)], atol=1e-8)

def test_repeated_solves_are_identical(solver, config):
    cfg = config.SolverConfig(rtol=1e-6, atol=1e-8, output_times=(0.5, 1.5))
    runs = [solver.integrate(rotate, np.array([0.3, -1.2]), (0.0, 2.0), cfg) for _ in range(2)]
    assert (runs[0].nfe, runs[0].accepted, runs[0].rejected) == (runs[1].nfe, runs[1].accepted, runs[1].rejected)
    np.testing.assert_array_equal(runs[0].final, runs[1].final)
    for a, b in zip(runs[0].trajectory_array(), runs[1].trajectory_array()):
        np.testing.assert_array_equal(a, b)
