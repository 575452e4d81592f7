# denots/errors.py
"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it:
1 validation, 2 numerical divergence, 3 study-assertion failure.
Input errors also subclass ``ValueError`` so plain ``except ValueError``
callers keep working.
"""
from __future__ import annotations

from typing import Any


class DenotsError(Exception):
    exit_code = 1


class ShapeError(DenotsError, ValueError):
    """Operands with incompatible shapes; the message names every shape."""

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class DomainError(DenotsError, ValueError):
    pass


class ConfigError(DenotsError, ValueError):
    def __init__(self, message: str, key: str | None = None) -> None:
        self.key = key
        super().__init__(message)


class SingularMatrixError(DenotsError, ValueError):
    pass


class DivergenceError(DenotsError):
    exit_code = 2

    def __init__(self, message: str, history: list[Any] | None = None) -> None:
        self.history = list(history or [])
        super().__init__(message)


class SolverError(DivergenceError):
    """Integration failed; ``partial`` holds what was computed before ``t``."""

    def __init__(self, message: str, t: float, partial: Any = None) -> None:
        self.t = t
        self.partial = partial
        super().__init__(message)


class StudyAssertionError(DenotsError):
    exit_code = 3
