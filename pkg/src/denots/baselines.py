# denots/baselines.py
"""Discrete recurrent baselines stepping once per observation.

Used as reference points in the memory benchmark.  Missing entries are
read as the (standardized) mean, i.e. zero.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tape, Tensor
from .config import TaskKind
from .dynamics import gru_gates, gru_shapes
from .errors import DomainError, ShapeError
from .interpolation import TimeSeries
from .model import HEAD_W, HEAD_b, Head, Standardizer, head_shapes, loss, prediction_values


class BaselineKind(str, Enum):
    RNN = "RNN"
    GRU = "GRU"


def rnn_shapes(input_size: int, hidden_size: int) -> dict[str, tuple[int, ...]]:
    return {"W_ih": (hidden_size, input_size), "W_hh": (hidden_size, hidden_size),
            "b_ih": (hidden_size,), "b_hh": (hidden_size,)}


@dataclass(frozen=True)
class RecurrentBaseline:
    kind: BaselineKind
    task: TaskKind
    input_size: int
    hidden_size: int
    out_dim: int
    params: ParamSet
    transform: Optional[Standardizer] = None

    def with_params(self, params: ParamSet) -> "RecurrentBaseline":
        return replace(self, params=params)

    def with_transform(self, transform: Standardizer) -> "RecurrentBaseline":
        return replace(self, transform=transform)

    def _run(self, series: TimeSeries, p: Mapping[str, Tensor]) -> Tensor:
        if series.u != self.input_size:
            raise ShapeError("baseline input", (series.u,), (self.input_size,))
        if self.transform is not None:
            series = self.transform.apply(series)
        xs = np.nan_to_num(series.values, nan=0.0)
        h = Tensor(np.zeros(self.hidden_size))
        for row in xs:
            x = Tensor(row)
            if self.kind is BaselineKind.GRU:
                _, z, n = gru_gates(p, x, h)
                h = (1.0 - z) * n + z * h
            else:
                h = ad.tanh(ad.matvec(p["W_ih"], x) + p["b_ih"] + ad.matvec(p["W_hh"], h) + p["b_hh"])
        return Head(self.task, self.out_dim).activate(ad.matvec(p[HEAD_W], h) + p[HEAD_b])

    def loss_and_grad(self, batch: Sequence[TimeSeries]) -> tuple[float, np.ndarray, list[int]]:
        if not batch:
            raise DomainError("empty batch")
        total, grad = 0.0, np.zeros(self.params.size)
        for s in batch:
            tape = Tape()
            value = loss(self.task, self._run(s, self.params.bind(tape)), s.target)
            grad += self.params.flat_grads(tape.backward(value))
            total += value.item()
        return total / len(batch), grad / len(batch), [s.n for s in batch]

    def predict_batch(self, series: Sequence[TimeSeries]) -> tuple[list[np.ndarray], list[int], list[float]]:
        consts = self.params.constants()
        preds = [prediction_values(self._run(s, consts)) for s in series]
        return preds, [s.n for s in series], [float("nan")] * len(series)


def build_baseline(kind: BaselineKind, task: TaskKind, input_size: int, out_dim: int, *,
                   hidden_size: int = 32, rng: Optional[np.random.Generator] = None) -> RecurrentBaseline:
    kind, task = BaselineKind(kind), TaskKind(task)
    if task is TaskKind.FORECAST:
        raise DomainError("recurrent baselines do not support forecasting")
    cell = gru_shapes(input_size, hidden_size) if kind is BaselineKind.GRU else rnn_shapes(input_size, hidden_size)
    shapes = {**cell, **head_shapes(hidden_size, out_dim)}
    if rng is None:
        return RecurrentBaseline(kind, task, input_size, hidden_size, out_dim,
                                 ParamSet({k: np.zeros(s) for k, s in shapes.items()}))
    bound = 1.0 / np.sqrt(hidden_size)
    params = ParamSet({k: rng.uniform(-bound, bound, size=s) for k, s in shapes.items()})
    return RecurrentBaseline(kind, task, input_size, hidden_size, out_dim, params)
