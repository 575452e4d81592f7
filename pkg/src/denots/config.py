# denots/config.py
"""Experiment configuration.

Every knob of a run lives in one frozen pydantic model tree rooted at
:class:`ExperimentConfig`, stored as JSON.  Command-line flags are applied
on top with :func:`apply_overrides` (flags > file > defaults).
"""
from __future__ import annotations

import hashlib
import json
import os
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

WORKERS_ENV = "DENOTS_WORKERS"
SUBSTREAMS = ("dataset", "init", "shuffle", "attack")


# ---------------- Enumerations ----------------
class FieldKind(str, Enum):
    NONF = "NoNF"
    SYNCNF = "SyncNF"
    ANTINF = "AntiNF"
    MLP_TANH = "MlpTanh"
    MLP_RELU = "MlpRelu"

    @property
    def is_gru(self) -> bool:
        return self in (FieldKind.NONF, FieldKind.SYNCNF, FieldKind.ANTINF)


class TaskKind(str, Enum):
    REGRESSION = "Regression"
    BINARY = "Binary"
    MULTICLASS = "Multiclass"
    FORECAST = "Forecast"


class DatasetKind(str, Enum):
    BUMP = "Bump"
    SINEMIX = "SineMix"
    SINE2 = "Sine2"
    PENDULUM = "Pendulum"
    PENDULUM_ANGLES = "PendulumAngles"


class Irregularity(str, Enum):
    UNIFORM = "uniform"
    POISSON = "poisson"


class AttackKind(str, Enum):
    DROP = "Drop"
    CHANGE = "Change"


class SweepAxis(str, Enum):
    SCALE = "scale"
    TOLERANCE = "tolerance"


DEFAULT_TASK = {
    DatasetKind.BUMP: TaskKind.BINARY,
    DatasetKind.SINEMIX: TaskKind.REGRESSION,
    DatasetKind.SINE2: TaskKind.FORECAST,
    DatasetKind.PENDULUM: TaskKind.REGRESSION,
    DatasetKind.PENDULUM_ANGLES: TaskKind.FORECAST,
}


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)


# ---------------- Solver ----------------
class SolverConfig(_Frozen):
    rtol: float = Field(1e-3, gt=0)
    atol: float = Field(1e-3, gt=0)
    safety: float = Field(0.9, gt=0, le=1)
    min_factor: float = Field(0.2, gt=0, le=1)
    max_factor: float = Field(10.0, ge=1)
    max_steps: int = Field(100_000, gt=0)
    output_times: tuple[float, ...] = ()
    adaptive: bool = True
    step_size: Optional[float] = Field(None, gt=0)

    @field_validator("output_times")
    @classmethod
    def _sorted_times(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if any(t < 0 or not np.isfinite(t) for t in v):
            raise ValueError("output_times must be finite and non-negative")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("output_times must be sorted")
        return v

    @model_validator(mode="after")
    def _fixed_needs_step(self) -> "SolverConfig":
        if not self.adaptive and self.step_size is None:
            raise ValueError("step_size is required when adaptive is false")
        return self


# ---------------- Data ----------------
class ScaleSpec(_Frozen):
    """Time scaling t <- (D/M) t.  ``M=None`` means the median train timeframe."""

    D: float = Field(1.0, gt=0)
    M: Optional[float] = Field(None, gt=0)


class DatasetSpec(_Frozen):
    kind: DatasetKind
    n_sequences: int = Field(200, ge=3)
    min_length: Optional[int] = Field(None, ge=2)
    max_length: Optional[int] = Field(None, ge=2)
    irregularity: Irregularity = Irregularity.UNIFORM
    missing_fraction: float = Field(0.0, ge=0, le=1)
    noise: float = Field(0.0, ge=0)
    seed: Optional[int] = None
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    @field_validator("split")
    @classmethod
    def _fractions(cls, v: tuple[float, float, float]) -> tuple[float, float, float]:
        if any(f < 0 for f in v) or abs(sum(v) - 1.0) > 1e-9:
            raise ValueError("split fractions must be non-negative and sum to 1")
        return v

    @model_validator(mode="after")
    def _length_range(self) -> "DatasetSpec":
        if self.min_length and self.max_length and self.min_length > self.max_length:
            raise ValueError("min_length exceeds max_length")
        return self


class AttackSpec(_Frozen):
    kind: AttackKind = AttackKind.DROP
    fraction: float = Field(0.0, ge=0, le=1)
    seed: int = 0


class AttackSweep(_Frozen):
    kind: AttackKind = AttackKind.DROP
    fractions: tuple[float, ...] = (0.0, 0.25, 0.5, 0.85)
    seeds: int = Field(5, ge=1)

    @field_validator("fractions")
    @classmethod
    def _in_unit(cls, v: tuple[float, ...]) -> tuple[float, ...]:
        if not v or any(not 0 <= f <= 1 for f in v):
            raise ValueError("fractions must be a non-empty list within [0, 1]")
        return v


# ---------------- Model / training ----------------
class ModelSpec(_Frozen):
    field: FieldKind = FieldKind.ANTINF
    hidden_size: int = Field(32, ge=1)
    dt_channel: bool = False


class TrainConfig(_Frozen):
    batch_size: int = Field(64, ge=1)
    full_batch_below: int = Field(256, ge=0)
    patience: int = Field(10, ge=1)
    max_epochs: Optional[int] = Field(None, ge=1)
    lr: float = Field(1e-3, gt=0)
    train_subset: float = Field(1.0, gt=0, le=1)


class VerifyConfig(_Frozen):
    iterations: int = Field(1000, ge=1)
    configs: int = Field(100, ge=1)
    seeds: int = Field(3, ge=1)
    n_paths: int = Field(200, ge=1)
    n_features: int = Field(4096, ge=16)
    xi: float = Field(0.01, gt=0)
    Q: float = Field(1.0, gt=0)
    deltas: tuple[float, ...] = (0.4, 0.2, 0.1)
    scales: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0, 20.0)
    tolerances: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
    axis: SweepAxis = SweepAxis.SCALE
    fields: tuple[FieldKind, ...] = (FieldKind.ANTINF, FieldKind.NONF)
    trained: bool = True


class ExperimentConfig(_Frozen):
    dataset: DatasetSpec
    model: ModelSpec = ModelSpec()
    scale: ScaleSpec = ScaleSpec()
    solver: SolverConfig = SolverConfig()
    train: TrainConfig = TrainConfig()
    attack: AttackSweep = AttackSweep()
    verify: VerifyConfig = VerifyConfig()
    task: Optional[TaskKind] = None
    seed: int = 0
    out_dir: str = "runs"

    @property
    def task_kind(self) -> TaskKind:
        return self.task or DEFAULT_TASK[self.dataset.kind]

    @property
    def dataset_seed(self) -> int:
        if self.dataset.seed is not None:
            return self.dataset.seed
        return int(substream(self.seed, "dataset").integers(2**31))


# ---------------- Loading / overrides ----------------
def _config_error(err: ValidationError) -> ConfigError:
    first = err.errors()[0]
    key = ".".join(str(p) for p in first["loc"])
    kind = "missing required key" if first["type"] == "missing" else first["msg"]
    return ConfigError(f"{key}: {kind}", key=key)


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(dict(data))
    except ValidationError as err:
        raise _config_error(err) from None


def load_config(path: str | os.PathLike[str]) -> ExperimentConfig:
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{p}: invalid JSON ({err.msg} at line {err.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return parse_config(data)


def save_config(cfg: ExperimentConfig, path: str | os.PathLike[str]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return p


def apply_overrides(cfg: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Return a copy with dotted keys replaced, e.g. ``{"scale.D": 10}``.

    ``None`` values are ignored so argparse defaults can be passed through.
    """
    data = cfg.model_dump(mode="json")
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown config key: {dotted}", key=dotted)
            node = node[part]
        if leaf not in node:
            raise ConfigError(f"unknown config key: {dotted}", key=dotted)
        node[leaf] = value
    return parse_config(data)


# ---------------- Reproducibility ----------------
def config_hash(cfg: ExperimentConfig) -> str:
    """First 16 hex chars of sha256 over canonical JSON, ``out_dir`` excluded."""
    payload = cfg.model_dump(mode="json", exclude={"out_dir"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of the root seed."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return np.random.default_rng([int(root_seed), int.from_bytes(digest[:8], "little")])


def worker_count(flag: int | None = None) -> int:
    if flag is not None:
        n = flag
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", key=WORKERS_ENV) from None
    if n < 1:
        raise ConfigError("worker count must be at least 1", key=WORKERS_ENV)
    return n
