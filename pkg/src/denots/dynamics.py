# denots/dynamics.py
"""Vector fields g(x, h) for dh/dt = g(x(t), h(t)) and time scaling.

GRU-based fields share one cell ``gru_gates``:

    r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
    z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn))

and differ only in how (r, z, n) are wired into dh/dt:

    NoNF    (1 - z) * n + z * h
    SyncNF  (1 - z) * (n - h)
    AntiNF  (1 - z) * n - z * h      with the gates computed from -h
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np
from scipy.optimize import brentq

from . import autodiff as ad
from .autodiff import ParamSet, Tensor
from .config import FieldKind
from .errors import DomainError, ShapeError
from .interpolation import CubicSplinePath, TimeSeries

logger = logging.getLogger(__name__)

GRU_NAMES = ("W_ir", "W_iz", "W_in", "W_hr", "W_hz", "W_hn",
             "b_ir", "b_iz", "b_in", "b_hr", "b_hz", "b_hn")
MLP_NAMES = ("W_1", "b_1", "W_2", "b_2")

Params = Mapping[str, Tensor]
Rhs = Callable[[float, Union[Tensor, np.ndarray]], Union[Tensor, np.ndarray]]


# ---------------- Time scaling ----------------
@dataclass(frozen=True)
class ScaleConfig:
    D: float
    M: float

    def __post_init__(self) -> None:
        if not (self.D > 0 and self.M > 0):
            raise DomainError(f"scale needs D > 0 and M > 0, got D={self.D}, M={self.M}")

    @property
    def factor(self) -> float:
        return self.D / self.M


def scale_times(series: TimeSeries, cfg: ScaleConfig) -> TimeSeries:
    """Multiply every timestamp (and forecast query time) by D/M."""
    k = cfg.factor
    query = None if series.query_times is None else series.query_times * k
    return series.with_times(series.times * k, query)


# ---------------- Parameters ----------------
def gru_shapes(input_size: int, hidden_size: int) -> dict[str, tuple[int, ...]]:
    u, v = input_size, hidden_size
    shapes: dict[str, tuple[int, ...]] = {}
    for gate in "rzn":
        shapes[f"W_i{gate}"] = (v, u)
    for gate in "rzn":
        shapes[f"W_h{gate}"] = (v, v)
    for name in GRU_NAMES[6:]:
        shapes[name] = (v,)
    return shapes


def mlp_shapes(input_size: int, hidden_size: int, width: int | None = None) -> dict[str, tuple[int, ...]]:
    w = width or hidden_size
    return {"W_1": (w, input_size + hidden_size), "b_1": (w,),
            "W_2": (hidden_size, w), "b_2": (hidden_size,)}


def field_shapes(kind: FieldKind, input_size: int, hidden_size: int) -> dict[str, tuple[int, ...]]:
    kind = FieldKind(kind)
    if kind.is_gru:
        return gru_shapes(input_size, hidden_size)
    return mlp_shapes(input_size, hidden_size)


def init_field_params(kind: FieldKind, input_size: int, hidden_size: int,
                      rng: np.random.Generator) -> ParamSet:
    """Uniform in [-1/sqrt(v), 1/sqrt(v)] for every weight and bias."""
    bound = 1.0 / np.sqrt(hidden_size)
    shapes = field_shapes(kind, input_size, hidden_size)
    return ParamSet({name: rng.uniform(-bound, bound, size=shape) for name, shape in shapes.items()})


def zero_field_params(kind: FieldKind, input_size: int, hidden_size: int) -> ParamSet:
    return ParamSet({name: np.zeros(shape) for name, shape in field_shapes(kind, input_size, hidden_size).items()})


# ---------------- Fields ----------------
def _check_gru(p: Params, x: Tensor, h: Tensor) -> None:
    v, u = h.shape[0], x.shape[0]
    if h.data.ndim != 1 or p["W_ir"].shape != (v, u) or p["W_hr"].shape != (v, v):
        raise ShapeError("gru_gates", p["W_ir"].shape, x.shape, h.shape)


def gru_gates(p: Params, x: Tensor, h: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    _check_gru(p, x, h)
    mv = ad.matvec
    r = ad.sigmoid(mv(p["W_ir"], x) + p["b_ir"] + mv(p["W_hr"], h) + p["b_hr"])
    z = ad.sigmoid(mv(p["W_iz"], x) + p["b_iz"] + mv(p["W_hz"], h) + p["b_hz"])
    n = ad.tanh(mv(p["W_in"], x) + p["b_in"] + r * (mv(p["W_hn"], h) + p["b_hn"]))
    return r, z, n


def mlp_field(kind: FieldKind, p: Params, x: Tensor, h: Tensor) -> Tensor:
    """Two linear layers over concat(x, h); MlpTanh also squashes the output."""
    kind = FieldKind(kind)
    xh = ad.concat(x, h)
    if p["W_1"].shape[1] != xh.shape[0] or p["W_2"].shape[0] != h.shape[0]:
        raise ShapeError("mlp_field", p["W_1"].shape, x.shape, h.shape)
    pre = ad.matvec(p["W_1"], xh) + p["b_1"]
    if kind is FieldKind.MLP_TANH:
        return ad.tanh(ad.matvec(p["W_2"], ad.tanh(pre)) + p["b_2"])
    if kind is FieldKind.MLP_RELU:
        return ad.matvec(p["W_2"], ad.relu(pre)) + p["b_2"]
    raise DomainError(f"{kind.value} is not an MLP field")


def vector_field(kind: FieldKind, p: Params, x: Tensor, h: Tensor) -> Tensor:
    kind = FieldKind(kind)
    if kind is FieldKind.NONF:
        _, z, n = gru_gates(p, x, h)
        return (1.0 - z) * n + z * h
    if kind is FieldKind.SYNCNF:
        _, z, n = gru_gates(p, x, h)
        return (1.0 - z) * (n - h)
    if kind is FieldKind.ANTINF:
        _, z, n = gru_gates(p, x, -h)
        return (1.0 - z) * n - z * h
    return mlp_field(kind, p, x, h)


def gate_mean(kind: FieldKind, p: Params, x: Tensor, h: Tensor) -> float:
    """Mean update gate z at (x, h); NaN for MLP fields."""
    kind = FieldKind(kind)
    if not kind.is_gru:
        return float("nan")
    hidden = -h if kind is FieldKind.ANTINF else h
    return float(gru_gates(p, x, hidden)[1].data.mean())


def make_rhs(kind: FieldKind, p: Params, path: CubicSplinePath, *, clamp: bool = False) -> Rhs:
    """Right-hand side f(t, h) = g(x(t), h) for the solver."""
    kind = FieldKind(kind)
    control = path.eval_clamped if clamp else path.eval

    def f(t: float, h: Tensor) -> Tensor:
        return vector_field(kind, p, Tensor(control(t)), h)

    return f


def numpy_field(kind: FieldKind, params: ParamSet, path: CubicSplinePath, *, clamp: bool = False) -> Rhs:
    """Plain-array right-hand side, no tape."""
    f = make_rhs(kind, params.constants(), path, clamp=clamp)

    def g(t: float, h: np.ndarray) -> np.ndarray:
        return f(t, Tensor(h)).data

    return g


# ---------------- Expressiveness budget ----------------
def lipschitz_budget(M_x: float, M_h: float, T: float) -> float:
    """L_F = (M_x / M_h) (exp(M_h T) - 1)."""
    if min(M_x, M_h, T) <= 0:
        raise DomainError("lipschitz_budget needs positive M_x, M_h and T")
    return float(M_x / M_h * np.expm1(M_h * T))


def hidden_lipschitz_for_budget(L_F: float, M_x: float, T: float) -> float:
    """Smallest M_h reaching the budget L_F over horizon T.

    L_F increases in M_h from the limit M_x T, so a solution exists only
    for L_F > M_x T.
    """
    if min(L_F, M_x, T) <= 0:
        raise DomainError("hidden_lipschitz_for_budget needs positive arguments")
    if L_F <= M_x * T:
        raise DomainError(f"budget {L_F} is not above the linear limit M_x*T = {M_x * T}")
    hi = 1.0
    while lipschitz_budget(M_x, hi, T) < L_F:
        hi *= 2.0
    return float(brentq(lambda m: lipschitz_budget(M_x, m, T) - L_F, 1e-12, hi, xtol=1e-14, rtol=1e-12))
