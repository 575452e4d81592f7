# denots/theory.py
"""Numerical checks of the stability, robustness and forgetting properties.

The reference dynamics are

    dh/dt = a f(h, x(t)) - b h,        f(h, x) = tanh(W_h h + W_x x)

with L_h = ||W_h||_2 and L_x = ||W_x||_2.  When a, b, L_h lie in (0, 1) and
a L_h < b, the norm of h is pulled below max(||h0||, a L_x X / (b - a L_h)),
input discrepancies reach the state with gain a L_x / (b - a L_h), and a
perturbation of the state decays at rate at least b - a L_h.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import roots_legendre

from .config import SolverConfig
from .errors import DomainError, ShapeError
from .gp import GpKernel, sample_fourier_paths
from .interpolation import TimeSeries, fit_natural_spline
from .solver import integrate

logger = logging.getLogger(__name__)

SPLINE_CONSTANT = 4.0 * math.pi ** 4 * math.sqrt(3.0) / 63.0
ISS_SLACK = 0.05
TIGHT = SolverConfig(rtol=1e-9, atol=1e-11)

Path = Callable[[float], np.ndarray]


# ---------------- Spectral norm ----------------
def spectral_norm(W: np.ndarray, iters: int = 5000, tol: float = 1e-14) -> float:
    """Largest singular value by power iteration on W^T W."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError("spectral_norm", W.shape)
    if not np.any(W):
        return 0.0
    v = np.ones(W.shape[1]) / math.sqrt(W.shape[1])
    # A constant start can be orthogonal to the top singular vector.
    v += 1e-3 * np.random.default_rng(0).standard_normal(v.shape)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = W.T @ (W @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = math.sqrt(float(v @ (W.T @ (W @ v))))
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


# ---------------- Constrained field ----------------
@dataclass(frozen=True)
class ConstrainedField:
    a: float
    b: float
    W_h: np.ndarray
    W_x: np.ndarray
    activation: str = "tanh"

    def __post_init__(self) -> None:
        W_h, W_x = np.atleast_2d(self.W_h).astype(np.float64), np.atleast_2d(self.W_x).astype(np.float64)
        if W_h.shape[0] != W_h.shape[1] or W_x.shape[0] != W_h.shape[0]:
            raise ShapeError("ConstrainedField", W_h.shape, W_x.shape)
        if self.activation not in ("tanh", "identity"):
            raise DomainError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "W_h", W_h)
        object.__setattr__(self, "W_x", W_x)

    @property
    def v(self) -> int:
        return self.W_h.shape[0]

    @property
    def u(self) -> int:
        return self.W_x.shape[1]

    @cached_property
    def L_h(self) -> float:
        return spectral_norm(self.W_h)

    @cached_property
    def L_x(self) -> float:
        return spectral_norm(self.W_x)

    @property
    def contraction(self) -> float:
        """b - a L_h, the guaranteed decay rate."""
        return self.b - self.a * self.L_h

    @property
    def gain(self) -> float:
        """a L_x / (b - a L_h)."""
        if self.contraction <= 0:
            raise DomainError(f"b - a L_h = {self.contraction:.4g} is not positive")
        return self.a * self.L_x / self.contraction

    @property
    def satisfies_assumptions(self) -> bool:
        return (0 < self.a < 1 and 0 < self.b < 1 and 0 < self.L_h < 1
                and self.a * self.L_h < self.b)

    def require_assumptions(self) -> None:
        if not self.satisfies_assumptions:
            raise DomainError(f"field violates a, b, L_h in (0, 1) with a L_h < b "
                              f"(a={self.a:.4g}, b={self.b:.4g}, L_h={self.L_h:.4g})")

    def f(self, h: np.ndarray, x: np.ndarray) -> np.ndarray:
        pre = self.W_h @ h + self.W_x @ x
        return np.tanh(pre) if self.activation == "tanh" else pre

    def rhs(self, path: Path) -> Callable[[float, np.ndarray], np.ndarray]:
        def g(t: float, h: np.ndarray) -> np.ndarray:
            return self.a * self.f(h, path(t)) - self.b * h
        return g

    def chi0(self, x_max: float) -> float:
        """Lyapunov level a L_x X / (b - a L_h) in the margin -> 0 limit."""
        return self.gain * x_max


def _scaled(W: np.ndarray, target: float) -> np.ndarray:
    return W * (target / spectral_norm(W))


def random_constrained_field(u: int, v: int, rng: np.random.Generator, margin: float = 0.05) -> ConstrainedField:
    """Random field with a, b, L_h in (0, 1) and b - a L_h >= ``margin``."""
    if not 0 < margin < 0.15:
        raise DomainError("margin must lie in (0, 0.15)")
    b = float(rng.uniform(0.2, 0.95))
    a = float(rng.uniform(0.1, 0.95))
    L_h = float(rng.uniform(0.05, min(0.95, (b - margin) / a)))
    L_x = float(rng.uniform(0.1, 2.0))
    W_h = _scaled(rng.standard_normal((v, v)), L_h)
    W_x = _scaled(rng.standard_normal((v, u)), L_x)
    return ConstrainedField(a, b, W_h, W_x)


def constant_path(value: Sequence[float] | float) -> Path:
    x = np.atleast_1d(np.asarray(value, dtype=np.float64))
    return lambda t: x


def random_sine_path(u: int, rng: np.random.Generator, amplitude: float = 1.0,
                     n_terms: int = 3) -> tuple[Path, float]:
    """Bounded smooth input and an upper bound on its 2-norm."""
    coef = rng.uniform(-1.0, 1.0, size=(n_terms, u))
    coef *= amplitude / np.abs(coef).sum(axis=0)
    freq = rng.uniform(0.1, 2.0, size=(n_terms, u))
    phase = rng.uniform(0, 2 * np.pi, size=(n_terms, u))

    def x(t: float) -> np.ndarray:
        return (coef * np.sin(freq * t + phase)).sum(axis=0)

    return x, amplitude * math.sqrt(u)


# ---------------- Input-to-state stability ----------------
@dataclass(frozen=True)
class LyapunovCheckConfig:
    margin: float = 0.01
    x_max: float = 1.0
    horizon: float = 50.0
    n_samples: int = 200
    slack: float = ISS_SLACK

    def __post_init__(self) -> None:
        if not 0 < self.margin < 1:
            raise DomainError("margin must lie in (0, 1)")
        if self.x_max < 0 or self.horizon <= 0 or self.n_samples < 2:
            raise DomainError("x_max >= 0, horizon > 0 and n_samples >= 2 are required")


@dataclass
class IssReport:
    times: np.ndarray
    norms: np.ndarray
    h0_norm: float
    chi0: float
    chi: float
    level: float

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())

    @property
    def passed(self) -> bool:
        return self.max_norm <= self.level

    @property
    def non_increasing(self) -> bool:
        return bool(np.all(np.diff(self.norms) <= 1e-9 * max(1.0, self.h0_norm)))


def _sample_times(t0: float, t1: float, n: int) -> tuple[float, ...]:
    return tuple(float(t) for t in np.linspace(t0, t1, n)[1:])


def _solve(rhs, h0: np.ndarray, times: tuple[float, ...], solver: SolverConfig) -> np.ndarray:
    cfg = solver.model_copy(update={"output_times": times})
    result = integrate(rhs, h0, (0.0, times[-1]), cfg, record_trajectory=False)
    return np.vstack([h0[None, :], result.sample_values()])


def iss_check(fld: ConstrainedField, cfg: LyapunovCheckConfig, input_path: Path, h0: np.ndarray,
              solver: SolverConfig = TIGHT) -> IssReport:
    """Integrate from ``h0`` and compare ||h(t)|| with the Lyapunov level."""
    fld.require_assumptions()
    h0 = np.asarray(h0, dtype=np.float64)
    if h0.shape != (fld.v,):
        raise ShapeError("iss_check h0", h0.shape, (fld.v,))
    times = _sample_times(0.0, cfg.horizon, cfg.n_samples)
    states = _solve(fld.rhs(input_path), h0, times, solver)
    h0_norm = float(np.linalg.norm(h0))
    chi0 = fld.chi0(cfg.x_max)
    level = max(h0_norm, chi0) * (1.0 + cfg.slack)
    return IssReport(np.array((0.0, *times)), np.linalg.norm(states, axis=1), h0_norm,
                     chi0, chi0 / (1.0 - cfg.margin), level)


# ---------------- Robustness ----------------
@dataclass
class RobustnessReport:
    times: np.ndarray
    gap: np.ndarray
    gain: float
    pointwise_gap: float
    pointwise_sigma2: float
    interval_gap: float
    interval_sigma2: float

    @property
    def pointwise_bound(self) -> float:
        return self.gain ** 2 * self.pointwise_sigma2

    @property
    def interval_bound(self) -> float:
        return self.gain ** 2 * self.interval_sigma2

    def within_bounds(self, rel_tol: float = 1e-6) -> bool:
        pw = float(self.gap.max()) <= self.pointwise_bound * (1 + rel_tol) + 1e-12
        it = self.interval_gap <= self.interval_bound * (1 + rel_tol) + 1e-12
        return pw and it


def robustness_gap(fld: ConstrainedField, path_pairs: Sequence[tuple[Path, Path]], knots: Sequence[float], *,
                   h0: Optional[np.ndarray] = None, per_interval: int = 20,
                   solver: SolverConfig = TIGHT, require_assumptions: bool = True) -> RobustnessReport:
    """Squared state gap driven by pairs of inputs, against both bounds.

    ``knots`` are the observation times; the interval discrepancy is the
    largest per-interval integral of the mean squared input gap and the
    interval gap averages the integrated state gap over the intervals.
    """
    if require_assumptions:
        fld.require_assumptions()
    if not path_pairs:
        raise DomainError("robustness_gap needs at least one pair of paths")
    knots = np.asarray(knots, dtype=np.float64)
    if knots.size < 2 or np.any(np.diff(knots) <= 0) or knots[0] != 0.0:
        raise DomainError("knots must start at 0 and increase")
    n = knots.size - 1
    grid = np.unique(np.concatenate([np.linspace(lo, hi, per_interval + 1)
                                     for lo, hi in zip(knots[:-1], knots[1:])]))
    h0 = np.zeros(fld.v) if h0 is None else np.asarray(h0, dtype=np.float64)
    v = fld.v

    state_gap = np.zeros(grid.size)
    input_gap = np.zeros(grid.size)
    for x_hat, x_star in path_pairs:
        g_hat, g_star = fld.rhs(x_hat), fld.rhs(x_star)

        def joint(t: float, y: np.ndarray) -> np.ndarray:
            return np.concatenate([g_hat(t, y[:v]), g_star(t, y[v:])])

        states = _solve(joint, np.concatenate([h0, h0]), tuple(float(t) for t in grid[1:]), solver)
        state_gap += np.sum((states[:, :v] - states[:, v:]) ** 2, axis=1)
        input_gap += np.array([np.sum((x_hat(t) - x_star(t)) ** 2) for t in grid])
    state_gap /= len(path_pairs)
    input_gap /= len(path_pairs)

    per_knot = np.searchsorted(grid, knots)
    interval_errors = [trapezoid(input_gap[i:j + 1], grid[i:j + 1]) for i, j in zip(per_knot[:-1], per_knot[1:])]
    return RobustnessReport(
        times=grid, gap=state_gap, gain=fld.gain,
        pointwise_gap=float(state_gap[-1]),
        pointwise_sigma2=float(input_gap.max()),
        interval_gap=float(trapezoid(state_gap, grid) / n),
        interval_sigma2=float(max(interval_errors)),
    )


def tightness_field(eps: float) -> ConstrainedField:
    """a = 1, b = 1 + eps/2, f(h, x) = (1 - eps/2) h + x; dh/dt = x - eps h."""
    if not 0 < eps < 2:
        raise DomainError("eps must lie in (0, 2)")
    return ConstrainedField(1.0, 1.0 + eps / 2, np.array([[1.0 - eps / 2]]), np.array([[1.0]]), "identity")


def tightness_example(A: float = 2.0, B: float = 1.0, eps: float = 0.5,
                      horizon: Optional[float] = None) -> RobustnessReport:
    """Constant inputs A and B through the boundary-case field.

    h(t) = A (1 - exp(-eps t)) / eps, so the squared gap tends to
    (A - B)^2 / eps^2, which equals the pointwise bound.
    """
    fld = tightness_field(eps)
    T = 20.0 / eps if horizon is None else horizon
    knots = np.arange(0.0, math.floor(T) + 1.0)
    return robustness_gap(fld, [(constant_path(A), constant_path(B))], knots,
                          require_assumptions=False)


def tightness_closed_form(A: float, B: float, eps: float, t: np.ndarray | float) -> np.ndarray:
    return (A - B) ** 2 * (-np.expm1(-eps * np.asarray(t))) ** 2 / eps ** 2


# ---------------- Forgetting ----------------
@dataclass
class ForgettingReport:
    taus: np.ndarray
    curve: np.ndarray

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.curve) < 0))


def sensitivity_curve(rhs: Callable[[float, np.ndarray], np.ndarray], h0: np.ndarray, coord: int,
                      delta: float = 1e-4, horizon: float = 10.0, n_samples: int = 50,
                      solver: SolverConfig = TIGHT) -> ForgettingReport:
    """||h(tau; h0 + delta e_i) - h(tau; h0)|| / delta for tau in (0, horizon]."""
    h0 = np.asarray(h0, dtype=np.float64)
    v = h0.size
    if not 0 <= coord < v:
        raise DomainError(f"coordinate {coord} outside [0, {v})")
    bumped = h0.copy()
    bumped[coord] += delta

    def joint(t: float, y: np.ndarray) -> np.ndarray:
        return np.concatenate([rhs(t, y[:v]), rhs(t, y[v:])])

    taus = _sample_times(0.0, horizon, n_samples + 1)
    states = _solve(joint, np.concatenate([h0, bumped]), taus, solver)[1:]
    curve = np.linalg.norm(states[:, v:] - states[:, :v], axis=1) / delta
    return ForgettingReport(np.asarray(taus), curve)


def forgetting_decay(fld: ConstrainedField, h0: np.ndarray, coord: int, delta: float = 1e-4,
                     horizon: Optional[float] = None, input_path: Optional[Path] = None,
                     n_samples: int = 50, solver: SolverConfig = TIGHT) -> ForgettingReport:
    """Sensitivity of the future state to a past perturbation of one coordinate.

    The default horizon spans five decay times 1 / (b - a L_h).
    """
    if fld.a != 0.0:
        fld.require_assumptions()
    path = input_path if input_path is not None else constant_path(np.zeros(fld.u))
    T = horizon if horizon is not None else 5.0 / fld.contraction
    return sensitivity_curve(fld.rhs(path), h0, coord, delta, T, n_samples, solver)


# ---------------- Spline interpolation error ----------------
def quartic_interval_error(Q: float, delta: float, u: int = 1) -> float:
    """Small-xi interval error of spline interpolation on a grid of step delta."""
    return SPLINE_CONSTANT * u * Q * delta ** 4


def spline_robustness_bound(fld: ConstrainedField, Q: float, u: int, delta_max: float) -> float:
    return fld.gain ** 2 * quartic_interval_error(Q, delta_max, u)


@dataclass(frozen=True)
class SplineErrorEstimate:
    delta: float
    estimate: float
    stderr: float
    theory: float

    @property
    def ratio(self) -> float:
        return self.estimate / self.theory

    @property
    def normalized(self) -> float:
        """estimate / (u Q delta^4), comparable to the spline constant."""
        return SPLINE_CONSTANT * self.ratio


def spline_error_mc(xi: float, Q: float, u: int, delta: float, n_paths: int = 200, seed: int = 0, *,
                    n_features: int = 4096, n_knots: int = 101, nodes: int = 16) -> SplineErrorEstimate:
    """Monte Carlo interval error of natural-spline interpolation.

    Paths are drawn per channel with random Fourier features, interpolated
    on a uniform grid, and the squared error is integrated by Gauss-Legendre
    quadrature over the middle half of the intervals.
    """
    if min(xi, Q, delta) <= 0 or u < 1 or n_knots < 8:
        raise DomainError("spline_error_mc needs positive xi, Q, delta, u >= 1 and at least 8 knots")
    kernel = GpKernel.quartic(xi, Q, u)
    rng = np.random.default_rng(seed)
    knots = delta * np.arange(n_knots)
    n_int = n_knots - 1
    interior = np.arange(n_int // 4, n_int - n_int // 4)

    x, w = roots_legendre(nodes)
    lo = knots[interior]
    quad_t = (lo[:, None] + 0.5 * delta * (x[None, :] + 1.0)).ravel()
    quad_w = 0.5 * delta * w

    paths = sample_fourier_paths(kernel, n_paths * u, n_features, rng, proposal_scale=1.0 / delta)
    values = paths.evaluate(np.concatenate([knots, quad_t]))
    at_knots, truth = values[:n_knots], values[n_knots:]
    fitted = fit_natural_spline(TimeSeries(knots, at_knots)).eval_many(quad_t)
    sq = ((fitted - truth) ** 2).reshape(interior.size, nodes, -1)
    per_interval = np.einsum("inp,n->ip", sq, quad_w)

    per_path = per_interval.mean(axis=0).reshape(n_paths, u).sum(axis=1)
    estimate = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan")
    logger.info("spline error delta=%.3g estimate=%.4g theory=%.4g", delta, estimate,
                quartic_interval_error(Q, delta, u))
    return SplineErrorEstimate(delta, estimate, stderr, quartic_interval_error(Q, delta, u))


def scaling_exponent(estimates: Sequence[SplineErrorEstimate]) -> float:
    """Least-squares slope of log(estimate) against log(delta)."""
    if len(estimates) < 2:
        raise DomainError("scaling exponent needs at least two step sizes")
    d = np.log([e.delta for e in estimates])
    y = np.log([e.estimate for e in estimates])
    return float(np.polyfit(d, y, 1)[0])
