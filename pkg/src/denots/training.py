# denots/training.py
"""Adam, the early-stopping training loop and evaluation.

Works with any model exposing ``task``, ``params``, ``with_params``,
``loss_and_grad`` and ``predict_batch`` (the CDE model and the discrete
recurrent baselines).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence, TypeVar, Union

import numpy as np

from .autodiff import ParamSet
from .baselines import BaselineKind, build_baseline
from .config import ExperimentConfig, TaskKind, TrainConfig, substream
from .datagen import generate, split
from .dynamics import ScaleConfig
from .errors import DivergenceError, DomainError, ShapeError, SolverError
from .interpolation import TimeSeries, median_timeframe
from .metrics import METRIC_NAME, metric
from .model import Standardizer, build_model

logger = logging.getLogger(__name__)


class Trainable(Protocol):
    task: TaskKind
    params: ParamSet

    def with_params(self, params: ParamSet) -> "Trainable": ...

    def loss_and_grad(self, batch: Sequence[TimeSeries]) -> tuple[float, np.ndarray, list[int]]: ...

    def predict_batch(self, series: Sequence[TimeSeries]) -> tuple[list[np.ndarray], list[int], list[float]]: ...


M = TypeVar("M", bound=Trainable)
Sink = Callable[[dict], None]


# ---------------- Adam ----------------
@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, lr: float = 1e-3) -> "AdamState":
        return cls(np.zeros(params.size), np.zeros(params.size), lr=lr)


def adam_step(state: AdamState, params: ParamSet, grads: Union[np.ndarray, Mapping[str, np.ndarray]]) -> ParamSet:
    """Bias-corrected Adam update; advances ``state`` in place."""
    g = params.flat_grads(grads) if isinstance(grads, Mapping) else np.asarray(grads, dtype=np.float64)
    if g.shape != state.m.shape:
        raise ShapeError("adam_step", g.shape, state.m.shape)
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params.unflat(params.flat() - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))


# ---------------- Evaluation ----------------
@dataclass(frozen=True)
class Evaluation:
    metric: float
    metric_name: str
    nfe_mean: float
    gate_mean: float
    predictions: list[np.ndarray] = field(repr=False, default_factory=list)


def evaluate(model: Trainable, series: Sequence[TimeSeries]) -> Evaluation:
    """Task metric, mean NFE per sequence and mean update gate over ``series``."""
    if not series:
        raise DomainError("cannot evaluate on an empty split")
    preds, nfes, gates = model.predict_batch(series)
    value = metric(model.task, preds, [s.target for s in series])
    finite_gates = [g for g in gates if not math.isnan(g)]
    gate = float(np.mean(finite_gates)) if finite_gates else float("nan")
    return Evaluation(value, METRIC_NAME[TaskKind(model.task)], float(np.mean(nfes)), gate, preds)


# ---------------- Training loop ----------------
@dataclass
class TrainResult:
    model: Trainable
    history: list[dict]
    best_epoch: int
    best_metric: float


def subset(series: Sequence[TimeSeries], fraction: float, rng: np.random.Generator) -> list[TimeSeries]:
    """Random ``ceil(fraction * n)`` of the series, order preserved."""
    if not 0 < fraction <= 1:
        raise DomainError("subset fraction must be in (0, 1]")
    if fraction == 1:
        return list(series)
    keep = max(1, math.ceil(fraction * len(series)))
    idx = np.sort(rng.choice(len(series), size=keep, replace=False))
    return [series[i] for i in idx]


def train(model: M, train_set: Sequence[TimeSeries], val_set: Sequence[TimeSeries],
          cfg: TrainConfig = TrainConfig(), rng: Optional[np.random.Generator] = None,
          sink: Optional[Sink] = None) -> TrainResult:
    """Mini-batch Adam with early stopping on the validation metric.

    Returns the best-validation weights.  A non-finite loss or solver
    failure raises :class:`DivergenceError` carrying the history so far.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    data = subset(train_set, cfg.train_subset, rng)
    if not data:
        raise DomainError("empty train split")
    n = len(data)
    batch_size = n if n < cfg.full_batch_below else cfg.batch_size

    params = model.params
    state = AdamState.for_params(params, cfg.lr)
    history: list[dict] = []
    best_metric, best_params, best_epoch = -math.inf, params, 0
    stale, epoch = 0, 0

    while cfg.max_epochs is None or epoch < cfg.max_epochs:
        epoch += 1
        order = rng.permutation(n)
        total = 0.0
        try:
            for start in range(0, n, batch_size):
                batch = [data[i] for i in order[start:start + batch_size]]
                value, grad, _ = model.with_params(params).loss_and_grad(batch)
                if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}", history)
                params = adam_step(state, params, grad)
                total += value * len(batch)
            ev = evaluate(model.with_params(params), val_set)
        except SolverError as err:
            raise DivergenceError(f"solver failure at epoch {epoch}: {err}", history) from err

        record = {"epoch": epoch, "train_loss": total / n, "val_metric": ev.metric, "nfe_mean": ev.nfe_mean}
        history.append(record)
        if sink is not None:
            sink(record)
        logger.info("epoch %d loss=%.5g val_%s=%.4f nfe=%.1f",
                    epoch, record["train_loss"], ev.metric_name, ev.metric, ev.nfe_mean)

        if ev.metric > best_metric:
            best_metric, best_params, best_epoch, stale = ev.metric, params, epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stop after epoch %d (best epoch %d)", epoch, best_epoch)
                break

    return TrainResult(model.with_params(best_params), history, best_epoch, best_metric)


# ---------------- Experiment ----------------
@dataclass
class Experiment:
    """Everything one configured run produces."""

    model: Trainable
    history: list[dict]
    best_epoch: int
    test: Evaluation
    splits: tuple[list[TimeSeries], list[TimeSeries], list[TimeSeries]] = field(repr=False)
    val_metric: float = float("nan")


def output_size(task: TaskKind, series: Sequence[TimeSeries]) -> int:
    task = TaskKind(task)
    if task is TaskKind.BINARY:
        return 1
    if task is TaskKind.MULTICLASS:
        return int(max(int(s.target) for s in series)) + 1
    if task is TaskKind.FORECAST:
        return int(np.atleast_2d(series[0].target).shape[1])
    return int(np.atleast_1d(series[0].target).size)


def prepare_splits(cfg: ExperimentConfig) -> tuple[list[TimeSeries], list[TimeSeries], list[TimeSeries]]:
    """Generate the configured dataset and split it."""
    series = generate(cfg.dataset, cfg.dataset_seed)
    task = cfg.task_kind
    stratify = task in (TaskKind.BINARY, TaskKind.MULTICLASS)
    return split(series, cfg.dataset.split, cfg.dataset_seed, stratify=stratify)


def build_for(cfg: ExperimentConfig, train_set: Sequence[TimeSeries],
              baseline: Optional[BaselineKind] = None) -> Trainable:
    """Freshly initialized model with its input standardization fitted on ``train_set``."""
    task = cfg.task_kind
    u, out = train_set[0].u, output_size(task, train_set)
    init = substream(cfg.seed, "init")
    if baseline is not None:
        base = build_baseline(baseline, task, u, out, hidden_size=cfg.model.hidden_size, rng=init)
        return base.with_transform(Standardizer.fit(train_set))
    M = cfg.scale.M if cfg.scale.M is not None else median_timeframe(train_set)
    model = build_model(cfg.model.field, task, u, out, hidden_size=cfg.model.hidden_size,
                        scale=ScaleConfig(cfg.scale.D, M), solver=cfg.solver,
                        dt_channel=cfg.model.dt_channel, rng=init)
    fitted_on = [s.with_dt_channel() for s in train_set] if cfg.model.dt_channel else list(train_set)
    return model.with_transform(Standardizer.fit(fitted_on))


def run_experiment(cfg: ExperimentConfig, sink: Optional[Sink] = None,
                   baseline: Optional[BaselineKind] = None,
                   splits: Optional[Sequence[Sequence[TimeSeries]]] = None) -> Experiment:
    """Build, train and score on the test split.

    ``splits`` are (train, val, test) already on hand, e.g. read back from
    disk; without them the configured dataset is generated and split.
    """
    train_set, val_set, test_set = (list(p) for p in splits) if splits is not None else prepare_splits(cfg)
    model = build_for(cfg, train_set, baseline)
    result = train(model, train_set, val_set, cfg.train, substream(cfg.seed, "shuffle"), sink)
    test = evaluate(result.model, test_set)
    logger.info("test %s=%.4f mean nfe=%.1f", test.metric_name, test.metric, test.nfe_mean)
    return Experiment(result.model, result.history, result.best_epoch, test, (train_set, val_set, test_set),
                      result.best_metric)
