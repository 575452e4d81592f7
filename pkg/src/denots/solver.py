# denots/solver.py
"""Dormand-Prince 5(4) integration with step control and NFE accounting.

States may be plain arrays or autodiff tensors.  With tensors every
accepted stage lands on the tape, so gradients flow through the
discretization itself (no adjoint).  Step control always works on values.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import SolverConfig
from .errors import DomainError, SolverError

logger = logging.getLogger(__name__)

State = Union[np.ndarray, Tensor]
Field = Callable[[float, State], State]

# ---------------- Tableau ----------------
C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B5 = A[6] + (0.0,)
B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
E = tuple(b - bs for b, bs in zip(B5, B4))

MIN_DT = 1e-6


def _values(x: State) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _combine(y: State, dt: float, coeffs: Sequence[float], ks: Sequence[State]) -> State:
    if isinstance(y, Tensor) or any(isinstance(k, Tensor) for k in ks):
        return ad.lincomb(y, [dt * c for c in coeffs], ks)
    out = np.array(y, dtype=np.float64, copy=True)
    for c, k in zip(coeffs, ks):
        if c != 0.0:
            out += (dt * c) * k
    return out


def _eval(f: Field, t: float, y: State) -> State:
    k = f(t, y)
    if not np.all(np.isfinite(_values(k))):
        raise SolverError(f"non-finite vector field value at t={t:.6g}", t=t)
    return k


# ---------------- Single step ----------------
@dataclass
class Step:
    y: State
    error: np.ndarray
    k_last: State
    nfe: int


def dopri5_step(f: Field, t: float, h: State, dt: float, k1: Optional[State] = None) -> Step:
    """One DOPRI5 step of size dt from (t, h).

    ``k1`` is the first-same-as-last stage of the previous step; given it,
    the step costs exactly 6 field evaluations (7 without it).  ``error`` is
    the embedded 5th minus 4th order difference.
    """
    if not dt > 0:
        raise DomainError(f"step size must be positive, got {dt!r}")
    nfe = 0
    if k1 is None:
        k1 = _eval(f, t, h)
        nfe += 1
    ks: list[State] = [k1]
    for i in range(1, 6):
        yi = _combine(h, dt, A[i], ks)
        ks.append(_eval(f, t + C[i] * dt, yi))
    y_next = _combine(h, dt, A[6], ks)
    ks.append(_eval(f, t + dt, y_next))
    nfe += 6
    err = dt * sum(e * _values(k) for e, k in zip(E, ks) if e != 0.0)
    return Step(y_next, np.asarray(err), ks[-1], nfe)


def error_norm(err: np.ndarray, y: State, y_next: State, rtol: float, atol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(_values(y)), np.abs(_values(y_next)))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


# ---------------- Integration ----------------
@dataclass
class SolveResult:
    final: State
    samples: list[State]
    times: tuple[float, ...]
    nfe: int = 0
    accepted: int = 0
    rejected: int = 0
    trajectory_times: list[float] = field(default_factory=list)
    trajectory: list[np.ndarray] = field(default_factory=list)

    def sample_values(self) -> np.ndarray:
        return np.stack([_values(s) for s in self.samples]) if self.samples else np.zeros((0,))

    def trajectory_array(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.trajectory_times), np.stack(self.trajectory)


def nfe_of(result: SolveResult) -> int:
    return result.nfe


def _initial_dt(span: float) -> float:
    return float(min(max(span / 100.0, MIN_DT), span))


def integrate(f: Field, h0: State, t_span: tuple[float, float], cfg: SolverConfig = SolverConfig(),
              *, record_trajectory: bool = True) -> SolveResult:
    """Integrate dh/dt = f(t, h) over t_span, landing exactly on ``cfg.output_times``."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise DomainError(f"empty integration span [{t0}, {t1}]")
    outputs = tuple(float(t) for t in cfg.output_times)
    if outputs and (outputs[0] < t0 or outputs[-1] > t1 * (1 + 1e-12)):
        raise DomainError(f"output times must lie inside [{t0}, {t1}]")
    outputs = tuple(min(t, t1) for t in outputs)

    result = SolveResult(final=h0, samples=[], times=outputs)
    t, h = t0, h0
    pending = 0

    def record(at: float, state: State) -> None:
        nonlocal pending
        while pending < len(outputs) and outputs[pending] <= at:
            result.samples.append(state)
            pending += 1
        if record_trajectory:
            result.trajectory_times.append(at)
            result.trajectory.append(_values(state).copy())

    def fail(message: str, at: float) -> SolverError:
        result.final = h
        logger.warning("%s", message)
        return SolverError(message, t=at, partial=result)

    try:
        k1 = _eval(f, t, h)
    except SolverError as err:
        raise fail(str(err), t) from None
    result.nfe = 1
    record(t, h)

    span = t1 - t0
    dt = cfg.step_size if not cfg.adaptive else _initial_dt(span)
    assert dt is not None
    while t < t1:
        if result.accepted + result.rejected >= cfg.max_steps:
            raise fail(f"max steps ({cfg.max_steps}) exceeded at t={t:.6g}", t)
        stop = outputs[pending] if pending < len(outputs) else t1
        remaining = stop - t
        landing = dt >= remaining * (1.0 - 1e-12)
        dt_try = remaining if landing else dt
        try:
            step = dopri5_step(f, t, h, dt_try, k1)
        except SolverError as err:
            result.nfe += 6
            raise fail(str(err), err.t) from None
        result.nfe += step.nfe

        if not cfg.adaptive:
            t = stop if landing else t + dt_try
            h, k1 = step.y, step.k_last
            result.accepted += 1
            record(t, h)
            continue

        err = error_norm(step.error, h, step.y, cfg.rtol, cfg.atol)
        if err <= 1.0:
            t = stop if landing else t + dt_try
            h, k1 = step.y, step.k_last
            result.accepted += 1
            record(t, h)
            factor = cfg.max_factor if err == 0.0 else min(cfg.max_factor, max(cfg.min_factor, cfg.safety * err ** -0.2))
        else:
            result.rejected += 1
            factor = max(cfg.min_factor, cfg.safety * err ** -0.2)
            logger.debug("rejected step t=%.6g dt=%.3g err=%.3g", t, dt_try, err)
        dt = dt_try * factor
        if dt < 1e-14 * max(1.0, abs(t)):
            raise fail(f"step size underflow at t={t:.6g}", t)

    result.final = h
    return result
