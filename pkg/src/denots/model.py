# denots/model.py
"""The end-to-end model: scale -> spline -> integrate -> linear head.

The hidden state starts at zero and evolves under one of the vector fields
of :mod:`denots.dynamics`.  The head reads h(T), or, for forecasting, h at
every query time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tape, Tensor
from .config import FieldKind, SolverConfig, TaskKind
from .dynamics import ScaleConfig, field_shapes, gate_mean, init_field_params, make_rhs, scale_times
from .errors import DomainError, ShapeError
from .interpolation import TimeSeries, fit_natural_spline
from .solver import integrate

logger = logging.getLogger(__name__)

HEAD_W = "head_W"
HEAD_b = "head_b"
BCE_EPS = 1e-7

Output = Union[Tensor, list[Tensor]]


# ---------------- Standardization ----------------
@dataclass(frozen=True)
class Standardizer:
    """Per-channel affine map fitted on observed train entries."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, series: Sequence[TimeSeries]) -> "Standardizer":
        if not series:
            raise DomainError("cannot standardize an empty train split")
        stacked = np.concatenate([s.values for s in series], axis=0)
        observed = ~np.isnan(stacked)
        counts = observed.sum(axis=0)
        filled = np.where(observed, stacked, 0.0)
        mean = np.divide(filled.sum(axis=0), counts, out=np.zeros(stacked.shape[1]), where=counts > 0)
        sq = np.where(observed, (stacked - mean) ** 2, 0.0).sum(axis=0)
        std = np.sqrt(np.divide(sq, counts, out=np.zeros_like(mean), where=counts > 0))
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    @classmethod
    def identity(cls, u: int) -> "Standardizer":
        return cls(np.zeros(u), np.ones(u))

    def apply(self, series: TimeSeries) -> TimeSeries:
        if series.u != self.mean.shape[0]:
            raise ShapeError("standardize", (series.u,), self.mean.shape)
        return series.with_values((series.values - self.mean) / self.std)


def standardize(train: Sequence[TimeSeries], *others: Sequence[TimeSeries]
                ) -> tuple[Standardizer, list[list[TimeSeries]]]:
    """Fit on ``train`` and apply the same map to every split given."""
    transform = Standardizer.fit(train)
    return transform, [[transform.apply(s) for s in split] for split in (train, *others)]


# ---------------- Model ----------------
@dataclass(frozen=True)
class Head:
    task: TaskKind
    out_dim: int

    def activate(self, logits: Tensor) -> Tensor:
        if self.task is TaskKind.BINARY:
            return ad.sigmoid(logits)
        if self.task is TaskKind.MULTICLASS:
            return ad.softmax(logits)
        return logits


@dataclass(frozen=True)
class DenotsModel:
    kind: FieldKind
    task: TaskKind
    input_size: int
    hidden_size: int
    out_dim: int
    scale: ScaleConfig
    solver: SolverConfig
    params: ParamSet
    dt_channel: bool = False
    transform: Optional[Standardizer] = None

    @property
    def head(self) -> Head:
        return Head(self.task, self.out_dim)

    @property
    def raw_input_size(self) -> int:
        return self.input_size - (1 if self.dt_channel else 0)

    def with_params(self, params: ParamSet) -> "DenotsModel":
        if params.shapes != self.params.shapes:
            raise ShapeError("with_params", (params.size,), (self.params.size,))
        return replace(self, params=params)

    def with_scale(self, scale: ScaleConfig) -> "DenotsModel":
        return replace(self, scale=scale)

    def with_transform(self, transform: Standardizer) -> "DenotsModel":
        return replace(self, transform=transform)

    def prepare(self, series: TimeSeries) -> TimeSeries:
        """Optional dt channel, then the fitted standardization."""
        if series.u != self.raw_input_size:
            raise ShapeError("model input", (series.u,), (self.raw_input_size,))
        if self.dt_channel:
            series = series.with_dt_channel()
        return self.transform.apply(series) if self.transform is not None else series

    def loss_and_grad(self, batch: Sequence[TimeSeries]) -> tuple[float, np.ndarray, list[int]]:
        return loss_and_grad(self, batch)

    def predict_batch(self, series: Sequence[TimeSeries]) -> tuple[list[np.ndarray], list[int], list[float]]:
        return predict_batch(self, series)


def head_shapes(hidden_size: int, out_dim: int) -> dict[str, tuple[int, ...]]:
    return {HEAD_W: (out_dim, hidden_size), HEAD_b: (out_dim,)}


def build_model(kind: FieldKind, task: TaskKind, input_size: int, out_dim: int, *,
                hidden_size: int = 32, scale: ScaleConfig = ScaleConfig(1.0, 1.0),
                solver: SolverConfig = SolverConfig(), dt_channel: bool = False,
                rng: Optional[np.random.Generator] = None) -> DenotsModel:
    """Fresh model; ``rng=None`` gives all-zero parameters.

    ``input_size`` counts raw features; the dt channel, when enabled, is added here.
    """
    kind, task = FieldKind(kind), TaskKind(task)
    width = input_size + (1 if dt_channel else 0)
    if rng is None:
        shapes = {**field_shapes(kind, width, hidden_size), **head_shapes(hidden_size, out_dim)}
        params = ParamSet({k: np.zeros(s) for k, s in shapes.items()})
    else:
        field_params = init_field_params(kind, width, hidden_size, rng)
        bound = 1.0 / np.sqrt(hidden_size)
        head = {k: rng.uniform(-bound, bound, size=s) for k, s in head_shapes(hidden_size, out_dim).items()}
        params = ParamSet({**dict(field_params.items()), **head})
    return DenotsModel(kind, task, width, hidden_size, out_dim, scale, solver, params, dt_channel)


# ---------------- Forward / loss ----------------
@dataclass
class Forward:
    output: Output
    nfe: int
    gate: float


def forward(model: DenotsModel, series: TimeSeries, params: Optional[Mapping[str, Tensor]] = None) -> Forward:
    """Run the pipeline on one series.

    ``params`` are the tensors to read weights from (tape leaves when
    training); ``None`` uses the model's own values as constants.
    """
    p = params if params is not None else model.params.constants()
    scaled = scale_times(model.prepare(series), model.scale)
    path = fit_natural_spline(scaled)
    forecast = model.task is TaskKind.FORECAST
    t0 = float(scaled.times[0])
    if forecast:
        if scaled.query_times is None or scaled.query_times.size == 0:
            raise DomainError("forecast series needs query times")
        queries = tuple(float(q) for q in scaled.query_times)
        if queries[0] <= t0:
            raise DomainError("forecast query times must follow the first observation")
        cfg = model.solver.model_copy(update={"output_times": queries})
        t1 = max(path.T, queries[-1])
    else:
        cfg = model.solver.model_copy(update={"output_times": ()})
        t1 = path.T

    rhs = make_rhs(model.kind, p, path, clamp=forecast)
    h0 = Tensor(np.zeros(model.hidden_size))
    result = integrate(rhs, h0, (t0, t1), cfg, record_trajectory=False)

    head = model.head
    W, b = p[HEAD_W], p[HEAD_b]
    if forecast:
        output: Output = [head.activate(ad.matvec(W, h) + b) for h in result.samples]
    else:
        output = head.activate(ad.matvec(W, result.final) + b)
    detached = {k: v.detach() for k, v in p.items()}
    gate = gate_mean(model.kind, detached, Tensor(path.eval_clamped(t1)), result.final.detach())
    return Forward(output, result.nfe, gate)


def loss(task: TaskKind, prediction: Output, target) -> Tensor:
    """MSE, BCE, CE, or MSE over forecast queries."""
    task = TaskKind(task)
    if task is TaskKind.FORECAST:
        if not isinstance(prediction, list):
            raise ShapeError("forecast loss needs one prediction per query", prediction.shape)
        target = np.asarray(target, dtype=np.float64)
        flat = ad.concat(*prediction)
        if flat.shape != (target.size,):
            raise ShapeError("forecast loss", flat.shape, target.shape)
        return ad.mean(ad.square(flat - target.ravel()))
    assert isinstance(prediction, Tensor)
    if task is TaskKind.REGRESSION:
        y = np.atleast_1d(np.asarray(target, dtype=np.float64))
        if y.shape != prediction.shape:
            raise ShapeError("regression loss", prediction.shape, y.shape)
        return ad.mean(ad.square(prediction - y))
    if task is TaskKind.BINARY:
        y = float(np.asarray(target).reshape(()))
        p = ad.clip(ad.take(prediction, 0), BCE_EPS, 1.0 - BCE_EPS)
        return -(y * ad.log(p) + (1.0 - y) * ad.log(1.0 - p))
    label = int(np.asarray(target).reshape(()))
    if not 0 <= label < prediction.shape[0]:
        raise DomainError(f"class label {label} outside [0, {prediction.shape[0]})")
    return -ad.log(ad.clip(ad.take(prediction, label), BCE_EPS, 1.0))


def prediction_values(output: Output) -> np.ndarray:
    if isinstance(output, list):
        return np.stack([o.data for o in output])
    return output.data.copy()


def predict(model: DenotsModel, series: TimeSeries) -> np.ndarray:
    return prediction_values(forward(model, series).output)


def predict_batch(model: DenotsModel, series: Sequence[TimeSeries]) -> tuple[list[np.ndarray], list[int], list[float]]:
    """Predictions, NFE and gate means for each series, without a tape."""
    consts = model.params.constants()
    preds, nfes, gates = [], [], []
    for s in series:
        out = forward(model, s, consts)
        preds.append(prediction_values(out.output))
        nfes.append(out.nfe)
        gates.append(out.gate)
    return preds, nfes, gates


def loss_and_grad(model: DenotsModel, batch: Sequence[TimeSeries]) -> tuple[float, np.ndarray, list[int]]:
    """Mean loss over ``batch`` and its flat gradient.

    One tape per series keeps each tape short; gradients are averaged.
    """
    if not batch:
        raise DomainError("empty batch")
    total, grad = 0.0, np.zeros(model.params.size)
    nfes = []
    for s in batch:
        tape = Tape()
        out = forward(model, s, model.params.bind(tape))
        value = loss(model.task, out.output, s.target)
        grad += model.params.flat_grads(tape.backward(value))
        total += value.item()
        nfes.append(out.nfe)
    n = len(batch)
    return total / n, grad / n, nfes
