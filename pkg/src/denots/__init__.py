# denots/__init__.py
"""denots package.

Re-exports the main entry points for convenient imports in tests or other code.
"""
from .__about__ import (
    __version__,
    APP_NAME,
    APP_TITLE,
    AUTHOR,
    COPYRIGHT,
    COPYRIGHT_YEAR,
)

from .config import (
    ExperimentConfig,
    FieldKind,
    SolverConfig,
    TaskKind,
    config_hash,
    load_config,
)
from .errors import (
    ConfigError,
    DenotsError,
    DivergenceError,
    DomainError,
    ShapeError,
    SingularMatrixError,
    SolverError,
    StudyAssertionError,
)
from .interpolation import CubicSplinePath, TimeSeries, fit_natural_spline
from .model import DenotsModel, build_model, forward, predict
from .solver import SolveResult, integrate
from .training import evaluate, run_experiment, train

__all__ = [
    # Metadata
    "__version__", "APP_NAME", "APP_TITLE",
    "AUTHOR", "COPYRIGHT", "COPYRIGHT_YEAR",
    # Config
    "ExperimentConfig", "FieldKind", "SolverConfig", "TaskKind", "config_hash", "load_config",
    # Errors
    "ConfigError", "DenotsError", "DivergenceError", "DomainError", "ShapeError",
    "SingularMatrixError", "SolverError", "StudyAssertionError",
    # Pipeline
    "CubicSplinePath", "TimeSeries", "fit_natural_spline",
    "DenotsModel", "build_model", "forward", "predict",
    "SolveResult", "integrate",
    "evaluate", "run_experiment", "train",
]
