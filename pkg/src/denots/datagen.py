# denots/datagen.py
"""Synthetic datasets, perturbation attacks and splitting.

Every sequence draws from its own generator seeded with ``(seed, index)``,
so a dataset is a pure function of its spec and seed and any single
sequence can be regenerated alone.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .config import AttackKind, AttackSpec, DatasetKind, DatasetSpec, Irregularity
from .errors import DomainError
from .interpolation import TimeSeries

logger = logging.getLogger(__name__)

BUMP_ZETA = 20.0
BUMP_LENGTH = 100
SINE_LENGTH = 100
SINE_FREQ = (1.0, 5.0)
SINE_AMP = (0.5, 1.5)
PENDULUM_WINDOW = 10.0
PENDULUM_LENGTH = (200, 400)
PENDULUM_OMEGA = (0.5, 2.0)
PENDULUM_DAMPING = (0.05, 1.0)
PENDULUM_SUBSTEPS = 10_000
PENDULUM_CHUNK = 64


def sequence_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


# ---------------- Shared pieces ----------------
def _lengths(spec: DatasetSpec, default: tuple[int, int]) -> tuple[int, int]:
    lo = spec.min_length or default[0]
    hi = spec.max_length or max(default[1], lo)
    if lo > hi:
        raise DomainError(f"length range [{lo}, {hi}] is empty")
    return lo, hi


def timestamps(mode: Irregularity, n: int, window: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` strictly increasing times from 0: a regular grid on [0, window], or
    Poisson arrivals with mean gap window/(n-1)."""
    if n < 2:
        raise DomainError("a sequence needs at least two timestamps")
    if Irregularity(mode) is Irregularity.POISSON:
        gaps = rng.exponential(window / (n - 1), size=n - 1)
        gaps = np.maximum(gaps, 1e-12)
        return np.concatenate([[0.0], np.cumsum(gaps)])
    return np.linspace(0.0, window, n)


def inject_missing(values: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Mark ``round(fraction * n)`` entries of every channel as missing."""
    if not 0 <= fraction <= 1:
        raise DomainError("missing fraction must be in [0, 1]")
    out = np.array(values, dtype=np.float64, copy=True)
    n = out.shape[0]
    k = int(round(fraction * n))
    if k == 0:
        return out
    for ch in range(out.shape[1]):
        out[rng.choice(n, size=k, replace=False), ch] = np.nan
    return out


def _observe(values: np.ndarray, spec: DatasetSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.noise > 0:
        values = values + rng.normal(0.0, spec.noise, size=values.shape)
    return inject_missing(values, spec.missing_fraction, rng)


def _forecast_split(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Even-indexed points of the first half are observed; everything else is queried."""
    idx = np.arange(n)
    observed = (idx < n // 2) & (idx % 2 == 0)
    return idx[observed], idx[~observed]


# ---------------- Bump ----------------
def bump(x: np.ndarray | float, zeta: float = BUMP_ZETA) -> np.ndarray:
    """exp(1 / ((zeta x)^2 - 1)) inside |zeta x| < 1, zero outside."""
    zx = np.asarray(x, dtype=np.float64) * zeta
    inside = np.abs(zx) < 1.0
    safe = np.where(inside, zx, 0.0)
    return np.where(inside, np.exp(1.0 / (safe * safe - 1.0)), 0.0)


def gen_bump(spec: DatasetSpec, seed: int = 0) -> list[TimeSeries]:
    """Binary: a bump at a random center (label 1) or the zero function (label 0)."""
    lo, hi = _lengths(spec, (BUMP_LENGTH, BUMP_LENGTH))
    half = 1.0 / BUMP_ZETA
    out = []
    for i in range(spec.n_sequences):
        rng = sequence_rng(seed, i)
        n = int(rng.integers(lo, hi + 1))
        t = timestamps(spec.irregularity, n, 1.0, rng)
        label = 1 if i % 2 == 0 else 0
        center = rng.uniform(half, t[-1] - half)
        clean = bump(t - center) if label else np.zeros(n)
        values = _observe(clean[:, None], spec, rng)
        out.append(TimeSeries(t, values, target=label, meta={"center": center if label else None}))
    return out


# ---------------- SineMix ----------------
def sinemix_signal(t: np.ndarray, f1: float, f2: float, phase: float,
                   amplitude: float = 1.0, t_mid: float = 0.5) -> np.ndarray:
    """Frequency f1 before ``t_mid`` and f2 from it on, continuous at ``t_mid``.

    The second wave starts at the same phase angle the first one reached,
    so value and slope sign carry over.
    """
    t = np.asarray(t, dtype=np.float64)
    angle = 2.0 * np.pi * f1 * t_mid + phase
    phase2 = angle - 2.0 * np.pi * f2 * t_mid
    first = amplitude * np.sin(2.0 * np.pi * f1 * t + phase)
    second = amplitude * np.sin(2.0 * np.pi * f2 * t + phase2)
    return np.where(t < t_mid, first, second)


def gen_sinemix(spec: DatasetSpec, seed: int = 0) -> list[TimeSeries]:
    """Regression: predict the frequency of the first half."""
    lo, hi = _lengths(spec, (SINE_LENGTH, SINE_LENGTH))
    out = []
    for i in range(spec.n_sequences):
        rng = sequence_rng(seed, i)
        n = int(rng.integers(lo, hi + 1))
        t = timestamps(spec.irregularity, n, 1.0, rng)
        f1, f2 = rng.uniform(*SINE_FREQ, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amplitude = rng.uniform(*SINE_AMP)
        t_mid = 0.5 * t[-1]
        clean = sinemix_signal(t, f1, f2, phase, amplitude, t_mid)
        values = _observe(clean[:, None], spec, rng)
        out.append(TimeSeries(t, values, target=float(f1),
                              meta={"f1": f1, "f2": f2, "phase": phase, "amplitude": amplitude}))
    return out


# ---------------- Sine-2 ----------------
def sine2_signal(t: np.ndarray, amps: Sequence[float], freqs: Sequence[float], phases: Sequence[float]) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return sum(a * np.sin(2.0 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))


def gen_sine2(spec: DatasetSpec, seed: int = 0) -> list[TimeSeries]:
    """Forecasting a sum of two sines from the even points of its first half."""
    lo, hi = _lengths(spec, (SINE_LENGTH, SINE_LENGTH))
    out = []
    for i in range(spec.n_sequences):
        rng = sequence_rng(seed, i)
        n = int(rng.integers(max(lo, 4), max(hi, 4) + 1))
        t = timestamps(spec.irregularity, n, 1.0, rng)
        amps = rng.uniform(*SINE_AMP, size=2)
        freqs = rng.uniform(*SINE_FREQ, size=2)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=2)
        full = sine2_signal(t, amps, freqs, phases)
        obs, query = _forecast_split(n)
        values = _observe(full[obs, None], spec, rng)
        out.append(TimeSeries(t[obs], values, target=full[query, None], query_times=t[query],
                              meta={"amps": amps, "freqs": freqs, "phases": phases}))
    return out


# ---------------- Pendulum ----------------
def _pendulum_rhs(theta: np.ndarray, omega: np.ndarray, w0sq: np.ndarray, c: np.ndarray):
    return omega, -w0sq * np.sin(theta) - c * omega


def _rk4(theta, omega, w0sq, c, dt):
    k1a, k1b = _pendulum_rhs(theta, omega, w0sq, c)
    k2a, k2b = _pendulum_rhs(theta + 0.5 * dt * k1a, omega + 0.5 * dt * k1b, w0sq, c)
    k3a, k3b = _pendulum_rhs(theta + 0.5 * dt * k2a, omega + 0.5 * dt * k2b, w0sq, c)
    k4a, k4b = _pendulum_rhs(theta + dt * k3a, omega + dt * k3b, w0sq, c)
    return (theta + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a),
            omega + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b))


def simulate_pendulum(omega0: np.ndarray, damping: np.ndarray, theta0: np.ndarray,
                      obs_times: Sequence[np.ndarray], step: float,
                      velocity0: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """RK4 on theta'' = -omega0^2 sin(theta) - c theta' for a batch of pendulums.

    All pendulums march one fine grid of size ``step``; each observation is
    reached by one partial RK4 step from the grid point before it.
    Returns an (n_b, 2) array of (theta, theta') per pendulum.
    """
    w0sq = np.asarray(omega0, dtype=np.float64) ** 2
    c = np.asarray(damping, dtype=np.float64)
    theta = np.array(theta0, dtype=np.float64)
    omega = np.zeros_like(theta) if velocity0 is None else np.array(velocity0, dtype=np.float64)
    out = [np.empty((len(ts), 2)) for ts in obs_times]

    # (fine step index, sequence, obs index, offset) for every observation
    plan: dict[int, list[tuple[int, int, float]]] = {}
    for b, ts in enumerate(obs_times):
        for j, t in enumerate(np.asarray(ts, dtype=np.float64)):
            k = int(np.floor(t / step + 1e-9))
            plan.setdefault(k, []).append((b, j, t - k * step))
    last = max(plan) if plan else 0

    for k in range(last + 1):
        if k in plan:
            entries = plan[k]
            bs = np.array([e[0] for e in entries])
            offs = np.array([e[2] for e in entries])
            th, om = _rk4(theta[bs], omega[bs], w0sq[bs], c[bs], offs)
            for (b, j, _), a, v in zip(entries, th, om):
                out[b][j] = (a, v)
        if k < last:
            theta, omega = _rk4(theta, omega, w0sq, c, step)
    return out


def pendulum_energy(theta: np.ndarray, velocity: np.ndarray, omega0: float) -> np.ndarray:
    return 0.5 * velocity ** 2 + omega0 ** 2 * (1.0 - np.cos(theta))


def _pendulum_draws(spec: DatasetSpec, seed: int):
    lo, hi = _lengths(spec, PENDULUM_LENGTH)
    draws = []
    for i in range(spec.n_sequences):
        rng = sequence_rng(seed, i)
        n = int(rng.integers(lo, hi + 1))
        t = timestamps(spec.irregularity, n, PENDULUM_WINDOW, rng)
        omega0 = rng.uniform(*PENDULUM_OMEGA)
        damping = float(np.exp(rng.uniform(np.log(PENDULUM_DAMPING[0]), np.log(PENDULUM_DAMPING[1]))))
        theta0 = rng.uniform(-np.pi / 2, np.pi / 2)
        draws.append((rng, t, omega0, damping, theta0))
    return draws


def _simulate_draws(draws) -> list[np.ndarray]:
    states: list[np.ndarray] = []
    step = PENDULUM_WINDOW / PENDULUM_SUBSTEPS
    for start in range(0, len(draws), PENDULUM_CHUNK):
        chunk = draws[start:start + PENDULUM_CHUNK]
        states += simulate_pendulum(
            np.array([d[2] for d in chunk]), np.array([d[3] for d in chunk]),
            np.array([d[4] for d in chunk]), [d[1] for d in chunk], step)
    return states


def gen_pendulum(spec: DatasetSpec, seed: int = 0) -> list[TimeSeries]:
    """Regression of the damping coefficient from (theta, theta') observations."""
    draws = _pendulum_draws(spec, seed)
    out = []
    for (rng, t, omega0, damping, theta0), state in zip(draws, _simulate_draws(draws)):
        values = _observe(state, spec, rng)
        out.append(TimeSeries(t, values, target=damping,
                              meta={"omega0": omega0, "theta0": theta0}))
    return out


def gen_pendulum_angles(spec: DatasetSpec, seed: int = 0) -> list[TimeSeries]:
    """Forecasting the angle: even points of the first half in, the rest queried."""
    draws = _pendulum_draws(spec, seed)
    out = []
    for (rng, t, omega0, damping, theta0), state in zip(draws, _simulate_draws(draws)):
        obs, query = _forecast_split(len(t))
        values = _observe(state[obs, :1], spec, rng)
        out.append(TimeSeries(t[obs], values, target=state[query, :1], query_times=t[query],
                              meta={"omega0": omega0, "damping": damping, "theta0": theta0}))
    return out


GENERATORS: dict[DatasetKind, Callable[[DatasetSpec, int], list[TimeSeries]]] = {
    DatasetKind.BUMP: gen_bump,
    DatasetKind.SINEMIX: gen_sinemix,
    DatasetKind.SINE2: gen_sine2,
    DatasetKind.PENDULUM: gen_pendulum,
    DatasetKind.PENDULUM_ANGLES: gen_pendulum_angles,
}


def generate(spec: DatasetSpec, seed: Optional[int] = None) -> list[TimeSeries]:
    seed = seed if seed is not None else (spec.seed or 0)
    series = GENERATORS[DatasetKind(spec.kind)](spec, seed)
    logger.info("generated %d %s sequences (seed %d)", len(series), DatasetKind(spec.kind).value, seed)
    return series


# ---------------- Attacks ----------------
def attack(series: TimeSeries, spec: AttackSpec, index: int = 0,
           *, mean: Optional[np.ndarray] = None, std: Optional[np.ndarray] = None) -> TimeSeries:
    """Drop or replace ``floor(p n)`` uniformly chosen observations.

    Change draws standard normal values; given ``mean``/``std`` they are
    drawn in that standardized space and mapped back.  Times and targets
    are untouched.
    """
    if not 0 <= spec.fraction <= 1:
        raise DomainError("attack fraction must be in [0, 1]")
    n = series.n
    k = int(math.floor(spec.fraction * n + 1e-9))
    if k == 0:
        return series
    rng = sequence_rng(spec.seed, index)
    positions = rng.choice(n, size=k, replace=False)
    values = series.values.copy()
    if AttackKind(spec.kind) is AttackKind.DROP:
        values[positions, :] = np.nan
    else:
        noise = rng.standard_normal((k, series.u))
        if mean is not None and std is not None:
            noise = mean[: series.u] + std[: series.u] * noise
        values[positions, :] = noise
    return series.with_values(values)


def attack_all(series: Sequence[TimeSeries], spec: AttackSpec, **kwargs) -> list[TimeSeries]:
    return [attack(s, spec, i, **kwargs) for i, s in enumerate(series)]


# ---------------- Splitting ----------------
def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``n`` items."""
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise DomainError("split fractions must be non-negative and sum to 1")
    raw = [f * n for f in fractions]
    sizes = [int(math.floor(r + 1e-9)) for r in raw]
    for i in sorted(range(len(raw)), key=lambda i: sizes[i] - raw[i])[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(series: Sequence[TimeSeries], fractions: Sequence[float] = (0.8, 0.1, 0.1),
          seed: int = 0, *, stratify: bool = False) -> tuple[list[TimeSeries], ...]:
    """Disjoint seeded split; ``stratify`` interleaves classes before cutting."""
    sizes = split_sizes(len(series), fractions)
    if any(s == 0 for s in sizes):
        raise DomainError(f"split of {len(series)} sequences leaves an empty part: {sizes}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(series))
    if stratify:
        labels = np.array([int(series[i].target) for i in order])
        keys = np.empty(len(order))
        for label in np.unique(labels):
            members = np.flatnonzero(labels == label)
            keys[members] = (np.arange(members.size) + 0.5) / members.size
        order = order[np.argsort(keys, kind="stable")]
    parts, start = [], 0
    for size in sizes:
        chunk = order[start:start + size]
        parts.append([series[i] for i in np.sort(chunk)])
        start += size
    return tuple(parts)
