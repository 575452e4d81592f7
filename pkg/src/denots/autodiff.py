# denots/autodiff.py
"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` records every operation whose inputs include a tensor that
lives on it.  Tensors without a tape are constants: ops on them compute
values only.  ``tape.backward(loss)`` walks the tape once in reverse
append order, which is a valid topological order because the tape is
append-only.

Binary ops require equal shapes.  The only broadcast is scalar-by-tensor
(a Python number, or a 0-d tensor against any shape).
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from .errors import DenotsError, DomainError, ShapeError

logger = logging.getLogger(__name__)

Number = Union[int, float]
Operand = Union["Tensor", Number, np.ndarray]
Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


# ---------------- Tape ----------------
@dataclass
class TapeNode:
    op: str
    inputs: tuple[Optional[int], ...]
    shape: tuple[int, ...]
    vjp: Optional[Vjp] = None
    name: Optional[str] = None


class Tape:
    """Append-only record of one forward pass.  Not thread-safe."""

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []
        self.leaves: "OrderedDict[str, int]" = OrderedDict()

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, name: str, value: Operand) -> "Tensor":
        if name in self.leaves:
            raise DenotsError(f"leaf {name!r} already registered on this tape")
        data = _array(value)
        self.nodes.append(TapeNode("leaf", (), data.shape, name=name))
        self.leaves[name] = len(self.nodes) - 1
        return Tensor(data, self, len(self.nodes) - 1)

    def record(self, op: str, inputs: Sequence["Tensor"], out: np.ndarray, vjp: Vjp) -> "Tensor":
        ids = tuple(t.node if t.tape is self else None for t in inputs)
        self.nodes.append(TapeNode(op, ids, out.shape, vjp))
        return Tensor(out, self, len(self.nodes) - 1)

    def backward(self, output: "Tensor") -> "OrderedDict[str, np.ndarray]":
        """Gradients of a scalar ``output`` for every leaf, keyed by leaf name.

        Leaves the output does not depend on get zeros.
        """
        if output.data.size != 1:
            raise ShapeError("backward needs a scalar output", output.shape)
        if output.tape is not self:
            raise DenotsError("backward: output was not recorded on this tape")
        assert output.node is not None
        grads: list[Optional[np.ndarray]] = [None] * (output.node + 1)
        grads[output.node] = np.ones(output.shape)
        for idx in range(output.node, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or node.vjp is None:
                continue
            for src, gi in zip(node.inputs, node.vjp(g)):
                if src is None or gi is None:
                    continue
                grads[src] = gi if grads[src] is None else grads[src] + gi
        out: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, idx in self.leaves.items():
            g = grads[idx] if idx < len(grads) else None
            out[name] = np.zeros(self.nodes[idx].shape) if g is None else g
        return out


# ---------------- Tensor ----------------
class Tensor:
    __slots__ = ("data", "tape", "node")
    __array_ufunc__ = None

    def __init__(self, data: Operand, tape: Optional[Tape] = None, node: Optional[int] = None) -> None:
        self.data = _array(data)
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item needs a single element", self.shape)
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __len__(self) -> int:
        return self.shape[0] if self.shape else 1

    def __repr__(self) -> str:
        flag = ", tape" if self.tape is not None else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Number) -> "Tensor":
        if not isinstance(other, (int, float)):
            raise TypeError("Tensor division is only defined by a scalar constant")
        return scale(self, 1.0 / other)

    def __neg__(self) -> "Tensor":
        return neg(self)


def _array(value: Operand) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


def tensor(value: Operand) -> Tensor:
    """Constant tensor (no tape)."""
    return Tensor(np.array(_array(value), dtype=np.float64))


def zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape))


def ones(*shape: int) -> Tensor:
    return Tensor(np.ones(shape))


def _lift(x: Operand) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, inputs: Sequence[Tensor], out: np.ndarray, vjp: Vjp) -> Tensor:
    tape: Optional[Tape] = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise DenotsError(f"{op}: operands live on different tapes")
    if tape is None:
        return Tensor(out)
    return tape.record(op, inputs, out, vjp)


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return np.asarray(g.sum()).reshape(shape) if shape != g.shape else g


def _pair(op: str, a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(op, a.shape, b.shape)
    return a, b


# ---------------- Elementwise ----------------
def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", (a, b), a.data + b.data, lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", (a, b), a.data - b.data, lambda g: (_reduce_to(g, sa), -_reduce_to(g, sb)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair("mul", a, b)
    x, y = a.data, b.data
    return _record("mul", (a, b), x * y, lambda g: (_reduce_to(g * y, x.shape), _reduce_to(g * x, y.shape)))


def neg(a: Tensor) -> Tensor:
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def scale(a: Tensor, c: Number) -> Tensor:
    c = float(c)
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return _record("square", (a,), x * x, lambda g: (2.0 * x * g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return _record("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    x = a.data
    # subgradient 0 at the kink
    return _record("relu", (a,), np.maximum(x, 0.0), lambda g: (g * (x > 0.0),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _record("exp", (a,), y, lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise DomainError("log of a non-positive value")
    return _record("log", (a,), np.log(x), lambda g: (g / x,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp into [lo, hi]; gradient flows only where no clamping happened."""
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _record("clip", (a,), np.clip(x, lo, hi), lambda g: (g * inside,))


def elementwise(op_tag: str, a: Operand, b: Operand | None = None) -> Tensor:
    """Dispatch by tag: add, sub, mul (binary); tanh, sigmoid, relu, exp, neg (unary).

    ``scale`` takes a Python number as ``b``.
    """
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu, "exp": exp, "neg": neg,
             "log": log, "square": square}
    if op_tag in binary:
        if b is None:
            raise DenotsError(f"{op_tag} needs two operands")
        return binary[op_tag](a, b)
    if op_tag in unary:
        return unary[op_tag](_lift(a))
    if op_tag == "scale":
        if not isinstance(b, (int, float)):
            raise DenotsError("scale needs a numeric constant")
        return scale(_lift(a), b)
    raise DenotsError(f"unknown op {op_tag!r}")


# ---------------- Linear algebra / reductions ----------------
def lincomb(base: Operand, coeffs: Sequence[float], terms: Sequence[Operand]) -> Tensor:
    """base + sum(c_i * t_i), recorded as a single node."""
    base = _lift(base)
    terms = [_lift(t) for t in terms]
    if len(coeffs) != len(terms):
        raise DenotsError("lincomb: one coefficient per term")
    for t in terms:
        if t.shape != base.shape:
            raise ShapeError("lincomb", base.shape, t.shape)
    out = base.data.copy()
    for c, t in zip(coeffs, terms):
        if c != 0.0:
            out += c * t.data
    cs = [float(c) for c in coeffs]
    return _record("lincomb", (base, *terms), out, lambda g: (g, *(c * g for c in cs)))


def matvec(W: Operand, v: Operand) -> Tensor:
    W, v = _lift(W), _lift(v)
    if W.data.ndim != 2 or v.data.ndim != 1 or W.shape[1] != v.shape[0]:
        raise ShapeError("matvec", W.shape, v.shape)
    A, x = W.data, v.data
    return _record("matvec", (W, v), A @ x, lambda g: (np.outer(g, x), A.T @ g))


def dot(a: Operand, b: Operand) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.shape != b.shape or a.data.ndim != 1:
        raise ShapeError("dot", a.shape, b.shape)
    x, y = a.data, b.data
    return _record("dot", (a, b), np.asarray(x @ y), lambda g: (g * y, g * x))


def sum(a: Tensor) -> Tensor:  # noqa: A001
    shape = a.shape
    return _record("sum", (a,), np.asarray(a.data.sum()), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    if n == 0:
        raise ShapeError("mean of an empty tensor", a.shape)
    shape = a.shape
    return _record("mean", (a,), np.asarray(a.data.mean()), lambda g: (np.full(shape, float(g) / n),))


def concat(*parts: Tensor) -> Tensor:
    if any(p.data.ndim != 1 for p in parts):
        raise ShapeError("concat", *(p.shape for p in parts))
    bounds = np.cumsum([p.size for p in parts])[:-1]
    out = np.concatenate([p.data for p in parts])
    return _record("concat", parts, out, lambda g: tuple(np.split(g, bounds)))


def take(a: Tensor, index: int) -> Tensor:
    """Element ``index`` of a 1-D tensor, as a 0-d tensor."""
    if a.data.ndim != 1:
        raise ShapeError("take", a.shape)
    n = a.shape[0]
    if not -n <= index < n:
        raise DomainError(f"take: index {index} out of range for length {n}")

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros(n)
        full[index] = float(g)
        return (full,)

    return _record("take", (a,), np.asarray(a.data[index]), vjp)


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("softmax", a.shape)
    e = np.exp(a.data - a.data.max())
    y = e / e.sum()
    return _record("softmax", (a,), y, lambda g: (y * (g - float(g @ y)),))


def logsumexp(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("logsumexp", a.shape)
    m = a.data.max()
    e = np.exp(a.data - m)
    p = e / e.sum()
    return _record("logsumexp", (a,), np.asarray(m + np.log(e.sum())), lambda g: (float(g) * p,))


# ---------------- Parameters ----------------
class ParamSet:
    """Ordered, immutable collection of named float64 arrays."""

    def __init__(self, tensors: Mapping[str, Operand]) -> None:
        self._values: "OrderedDict[str, np.ndarray]" = OrderedDict(
            (name, np.array(_array(v), dtype=np.float64)) for name, v in tensors.items()
        )
        for v in self._values.values():
            v.setflags(write=False)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: object) -> bool:
        return name in self._values

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}{v.shape}" for k, v in self._values.items())
        return f"ParamSet({inner})"

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._values.items())

    @property
    def names(self) -> list[str]:
        return list(self._values)

    @property
    def shapes(self) -> "OrderedDict[str, tuple[int, ...]]":
        return OrderedDict((k, v.shape) for k, v in self._values.items())

    @property
    def size(self) -> int:
        return int(np.sum([v.size for v in self._values.values()], dtype=np.int64))

    def flat(self) -> np.ndarray:
        if not self._values:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._values.values()])

    def unflat(self, vector: np.ndarray) -> "ParamSet":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ShapeError("unflat", vector.shape, (self.size,))
        out, pos = OrderedDict(), 0
        for name, v in self._values.items():
            out[name] = vector[pos:pos + v.size].reshape(v.shape)
            pos += v.size
        return ParamSet(out)

    def flat_grads(self, grads: Mapping[str, np.ndarray]) -> np.ndarray:
        """Pack a name->gradient mapping in this set's order (missing names count as zero)."""
        parts = [np.asarray(grads[k]).ravel() if k in grads else np.zeros(v.size)
                 for k, v in self._values.items()]
        return np.concatenate(parts) if parts else np.zeros(0)

    def replace(self, **arrays: Operand) -> "ParamSet":
        merged = OrderedDict(self._values)
        for name, value in arrays.items():
            if name not in merged:
                raise KeyError(name)
            value = _array(value)
            if value.shape != merged[name].shape:
                raise ShapeError(f"replace {name}", merged[name].shape, value.shape)
            merged[name] = value
        return ParamSet(merged)

    def bind(self, tape: Tape) -> dict[str, Tensor]:
        return {name: tape.leaf(name, v) for name, v in self._values.items()}

    def constants(self) -> dict[str, Tensor]:
        return {name: Tensor(v) for name, v in self._values.items()}

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


# ---------------- Gradient checking ----------------
@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst: Optional[tuple[str, int]]
    passed: bool
    checked: int
    analytic: dict[str, np.ndarray] = field(repr=False)
    numeric: dict[str, np.ndarray] = field(repr=False)


def _value(out: Operand) -> float:
    arr = _array(out)
    if arr.size != 1:
        raise ShapeError("grad_check needs a scalar function", arr.shape)
    return float(arr.reshape(()))


def grad_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: ParamSet,
    epsilon: float = 1e-5,
    rel_tol: float = 1e-4,
    *,
    floor: float = 1e-6,
    skip: Optional[Mapping[str, np.ndarray]] = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    Relative error per coordinate is |a - n| / max(|a|, |n|, floor).  ``skip``
    maps parameter names to boolean masks of coordinates to leave out
    (e.g. those within a few epsilon of a ReLU kink).
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    tape = Tape()
    analytic = dict(tape.backward(_lift(f(params.bind(tape)))))

    base = params.flat()
    numeric_flat = np.zeros_like(base)
    for j in range(base.size):
        nudged = base.copy()
        nudged[j] = base[j] + epsilon
        up = _value(f(params.unflat(nudged).constants()))
        nudged[j] = base[j] - epsilon
        down = _value(f(params.unflat(nudged).constants()))
        numeric_flat[j] = (up - down) / (2.0 * epsilon)
    numeric = {k: v for k, v in params.unflat(numeric_flat).items()}

    worst: Optional[tuple[str, int]] = None
    max_err, checked = 0.0, 0
    for name in params:
        a = analytic[name].ravel()
        n = numeric[name].ravel()
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if skip is not None and name in skip:
            rel = np.where(np.asarray(skip[name]).ravel(), 0.0, rel)
            checked += int(np.count_nonzero(~np.asarray(skip[name]).ravel()))
        else:
            checked += rel.size
        if rel.size and rel.max() > max_err:
            max_err = float(rel.max())
            worst = (name, int(rel.argmax()))
    report = GradCheckReport(max_err, worst, max_err < rel_tol, checked, analytic, numeric)
    logger.debug("grad_check: max rel error %.3g at %s", max_err, worst)
    return report
