# denots/gp.py
"""Stationary Gaussian-process helpers.

Two kernels are supported, both written against the ordinary frequency f
(cycles per unit time), K(tau) = integral F(f) exp(2 pi i f tau) df:

    SquaredExponential   K(tau) = s2 exp(-tau^2 / (2 l^2))
    QuarticSpectral      F(f)   = Q / (f^4 + xi^4)

The quartic kernel has the natural cubic spline as its xi -> 0 posterior
mean; its sample paths are drawn with random Fourier features.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import DomainError, SingularMatrixError

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-8


class KernelKind(str, Enum):
    SQUARED_EXPONENTIAL = "SquaredExponential"
    QUARTIC_SPECTRAL = "QuarticSpectral"


# ---------------- Kernels ----------------
@dataclass(frozen=True)
class GpKernel:
    kind: KernelKind = KernelKind.SQUARED_EXPONENTIAL
    length_scale: float = 1.0
    variance: float = 1.0
    xi: float = 0.01
    Q: float = 1.0
    u: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if min(self.length_scale, self.variance, self.xi, self.Q) <= 0:
            raise DomainError("kernel parameters must be positive")
        if self.u < 1:
            raise DomainError("kernel dimension u must be at least 1")

    @classmethod
    def squared_exponential(cls, length_scale: float = 1.0, variance: float = 1.0) -> "GpKernel":
        return cls(KernelKind.SQUARED_EXPONENTIAL, length_scale=length_scale, variance=variance)

    @classmethod
    def quartic(cls, xi: float, Q: float = 1.0, u: int = 1) -> "GpKernel":
        return cls(KernelKind.QUARTIC_SPECTRAL, xi=xi, Q=Q, u=u)

    def cov(self, tau: np.ndarray | float) -> np.ndarray:
        """Per-channel covariance at lag ``tau``."""
        tau = np.abs(np.asarray(tau, dtype=np.float64))
        if self.kind is KernelKind.SQUARED_EXPONENTIAL:
            return self.variance * np.exp(-0.5 * (tau / self.length_scale) ** 2)
        s = math.sqrt(2.0) * math.pi * self.xi * tau
        return self.prior_variance * np.exp(-s) * (np.cos(s) + np.sin(s))

    @property
    def prior_variance(self) -> float:
        """K(0)."""
        if self.kind is KernelKind.SQUARED_EXPONENTIAL:
            return self.variance
        return self.Q * math.pi / (math.sqrt(2.0) * self.xi ** 3)

    def spectral_density(self, f: np.ndarray | float) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if self.kind is KernelKind.SQUARED_EXPONENTIAL:
            ell = self.length_scale
            return self.variance * ell * math.sqrt(2 * math.pi) * np.exp(-2 * (math.pi * ell * f) ** 2)
        return self.Q / (f ** 4 + self.xi ** 4)

    def gram(self, times: np.ndarray, other: Optional[np.ndarray] = None) -> np.ndarray:
        a = np.asarray(times, dtype=np.float64)
        b = a if other is None else np.asarray(other, dtype=np.float64)
        return self.cov(a[:, None] - b[None, :])


# ---------------- Posterior variance ----------------
def gp_posterior_variance(kernel: GpKernel, observed_times: Sequence[float], query_t: float,
                          jitter: float = DEFAULT_JITTER) -> float:
    """K(0) - k^T K^{-1} k for one channel.

    ``jitter`` is added to the Gram diagonal relative to K(0).  A Gram
    matrix that still fails Cholesky raises :class:`SingularMatrixError`.
    """
    times = np.asarray(observed_times, dtype=np.float64).ravel()
    prior = kernel.prior_variance
    if times.size == 0:
        return prior
    K = kernel.gram(times)
    K[np.diag_indices_from(K)] += jitter * prior
    try:
        L = linalg.cholesky(K, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as err:
        raise SingularMatrixError(f"singular Gram matrix for {times.size} observations: {err}") from None
    k = kernel.cov(times - float(query_t))
    w = linalg.solve_triangular(L, k, lower=True)
    return float(prior - w @ w)


# ---------------- Interval-stretch Monte Carlo ----------------
@dataclass(frozen=True)
class StretchTrial:
    n: int
    r: float
    split: int
    query: float
    variance: float
    stretched_variance: float

    @property
    def margin(self) -> float:
        return self.stretched_variance - self.variance


def stretch_trial(times: np.ndarray, split: int, r: float, query: float,
                  kernel: GpKernel = GpKernel(), jitter: float = DEFAULT_JITTER) -> StretchTrial:
    """Posterior variance before and after shifting ``times[split:]`` by ``r``.

    The query point moves with the shifted block when it lies after
    ``times[split]``.
    """
    times = np.asarray(times, dtype=np.float64)
    if not 0 < split < times.size:
        raise DomainError(f"split index {split} outside [1, {times.size - 1}]")
    stretched = times.copy()
    stretched[split:] += r
    moved = query + r if times[split] < query else query
    return StretchTrial(
        n=int(times.size), r=float(r), split=int(split), query=float(query),
        variance=gp_posterior_variance(kernel, times, query, jitter),
        stretched_variance=gp_posterior_variance(kernel, stretched, moved, jitter),
    )


@dataclass
class AssumptionReport:
    iterations: int
    failures: int = 0
    retries: int = 0
    skipped: int = 0
    tolerance: float = 0.0
    trials: list[StretchTrial] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.skipped == 0

    @property
    def worst_margin(self) -> float:
        return min((t.margin for t in self.trials), default=float("nan"))


def assumption_test_mc(iterations: int = 1000, seed: int = 0, *, kernel: GpKernel = GpKernel(),
                       jitter: float = DEFAULT_JITTER, tolerance: Optional[float] = None,
                       max_retries: int = 100, min_n: int = 5, max_n: int = 300) -> AssumptionReport:
    """Check that stretching one gap never lowers the posterior variance.

    Each iteration draws a length n and a shift r, then sorted times on
    [0, 1] with pinned endpoints, a split index and a query point.  A
    singular Gram matrix redraws the times with the same n and r.  A
    variance drop larger than ``tolerance`` (default ten times the jitter
    level) counts as a failure.
    """
    if iterations < 1:
        raise DomainError("iterations must be at least 1")
    tol = 10.0 * jitter * kernel.prior_variance if tolerance is None else tolerance
    rng = np.random.default_rng(seed)
    report = AssumptionReport(iterations, tolerance=tol)
    for it in range(iterations):
        n = int(rng.integers(min_n, max_n + 1))
        r = float(rng.random())
        for attempt in range(max_retries + 1):
            times = np.sort(rng.random(n))
            times[0], times[-1] = 0.0, 1.0
            split = int(rng.integers(1, n))
            query = float(rng.random())
            try:
                trial = stretch_trial(times, split, r, query, kernel, jitter)
            except SingularMatrixError:
                report.retries += 1
                logger.debug("iteration %d: singular Gram matrix, redrawing (attempt %d)", it, attempt + 1)
                continue
            report.trials.append(trial)
            if trial.stretched_variance < trial.variance - tol:
                report.failures += 1
                logger.info("iteration %d: stretched variance %.3g below original %.3g",
                            it, trial.stretched_variance, trial.variance)
            break
        else:
            report.skipped += 1
    return report


# ---------------- Spectral sampling ----------------
@dataclass(frozen=True)
class FourierPaths:
    """Random-Fourier-feature sample paths, one row of features per path.

    x_p(t) = sum_j amplitude[p, j] cos(2 pi freq[p, j] t + phase[p, j])
    """

    freq: np.ndarray
    phase: np.ndarray
    amplitude: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.freq.shape[0]

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Values at ``times``, shape ``(len(times), n_paths)``."""
        t = np.asarray(times, dtype=np.float64)
        out = np.empty((t.size, self.n_paths))
        for p in range(self.n_paths):
            arg = 2.0 * np.pi * np.outer(t, self.freq[p]) + self.phase[p]
            out[:, p] = np.cos(arg) @ self.amplitude[p]
        return out


def cauchy_proposal(scale: float) -> tuple[Callable[[np.random.Generator, tuple[int, ...]], np.ndarray],
                                             Callable[[np.ndarray], np.ndarray]]:
    """Sampler and density of a zero-centred Cauchy law with the given scale."""
    def draw(rng: np.random.Generator, size: tuple[int, ...]) -> np.ndarray:
        return scale * rng.standard_cauchy(size)

    def density(f: np.ndarray) -> np.ndarray:
        return 1.0 / (np.pi * scale * (1.0 + (f / scale) ** 2))

    return draw, density


def sample_fourier_paths(kernel: GpKernel, n_paths: int, n_features: int, rng: np.random.Generator,
                         proposal_scale: float = 1.0) -> FourierPaths:
    """Importance-sampled random Fourier features for ``kernel``.

    Frequencies come from a Cauchy proposal and are weighted by F/p so the
    feature sum has covariance K for any proposal with full support.
    """
    if n_paths < 1 or n_features < 1:
        raise DomainError("need at least one path and one feature")
    draw, density = cauchy_proposal(proposal_scale)
    freq = draw(rng, (n_paths, n_features))
    weight = kernel.spectral_density(freq) / density(freq)
    amplitude = np.sqrt(2.0 * weight / n_features)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(n_paths, n_features))
    return FourierPaths(freq, phase, amplitude)
