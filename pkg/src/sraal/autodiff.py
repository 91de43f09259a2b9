"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` is a Wengert list: every primitive appends one node holding
the forward value, the ids of its input nodes, and a vector-Jacobian-product
closure over the saved inputs.  Node inputs always reference earlier nodes,
so the list is acyclic by construction and :func:`backward` is a single
reverse sweep.

Two conventions hold everywhere:

* Sampling noise enters as a ``constant`` leaf, so gradients flow through
  distribution parameters only (the standard reparameterized estimator).
* ``log`` clamps its argument at :data:`LOG_CLAMP` in both the forward value
  and the gradient (the gradient is exactly the derivative of the clamped
  forward, i.e. zero on the flat region).  This keeps differences like
  ``log(score - d)`` finite when the gap closes.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

LOG_CLAMP = 1e-12


class ShapeMismatch(ValueError):
    """Raised when an op receives operands with incompatible shapes."""


def tensor(data, shape: Sequence[int] | None = None, checked: bool = False) -> np.ndarray:
    """Build a float64 array, optionally reshaped, rejecting NaN/Inf when checked."""
    arr = np.asarray(data, dtype=np.float64)
    if shape is not None:
        expected = int(np.prod(shape)) if len(shape) else 1
        if arr.size != expected:
            raise ShapeMismatch(
                f"tensor: {arr.size} elements cannot fill shape {tuple(shape)}"
            )
        arr = arr.reshape(tuple(shape))
    if checked and not np.isfinite(arr).all():
        raise ValueError("tensor: non-finite element rejected in checked mode")
    return arr


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "i")

    def __init__(self, tape: "Tape", i: int):
        self.tape = tape
        self.i = i

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.i]

    @property
    def shape(self) -> tuple:
        return self.tape.values[self.i].shape

    def __add__(self, other):
        return add(self, self.tape.lift(other))

    def __radd__(self, other):
        return add(self.tape.lift(other), self)

    def __sub__(self, other):
        return sub(self, self.tape.lift(other))

    def __rsub__(self, other):
        return sub(self.tape.lift(other), self)

    def __mul__(self, other):
        return mul(self, self.tape.lift(other))

    def __rmul__(self, other):
        return mul(self.tape.lift(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Var(node={self.i}, op={self.tape.ops[self.i]!r}, shape={self.shape})"


class Tape:
    """Append-only record of primitive ops plus per-node adjoints after backward."""

    def __init__(self, checked: bool = False):
        self.checked = checked
        self.ops: list[str] = []
        self.values: list[np.ndarray] = []
        self.inputs: list[tuple[int, ...]] = []
        self.vjps: list[Callable | None] = []
        self.needs_grad: list[bool] = []
        self.gradients: list[np.ndarray | None] | None = None

    def __len__(self) -> int:
        return len(self.values)

    def _record(self, op, value, inputs, vjp, needs_grad) -> Var:
        if self.checked and not np.isfinite(value).all():
            raise ValueError(f"{op}: non-finite value rejected in checked mode")
        self.ops.append(op)
        self.values.append(value)
        self.inputs.append(inputs)
        self.vjps.append(vjp)
        self.needs_grad.append(needs_grad)
        return Var(self, len(self.values) - 1)

    def parameter(self, array) -> Var:
        """Leaf that receives a gradient."""
        return self._record("parameter", tensor(array, checked=self.checked), (), None, True)

    def constant(self, array) -> Var:
        """Leaf excluded from differentiation (data, labels, sampling noise)."""
        return self._record("constant", tensor(array, checked=self.checked), (), None, False)

    def lift(self, x) -> Var:
        """Pass Vars through; wrap scalars/arrays as constants."""
        return x if isinstance(x, Var) else self.constant(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(ax for ax, n in enumerate(shape) if n == 1 and grad.shape[ax] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(op: str, a: Var, b: Var, forward, vjp_builder) -> Var:
    tape = a.tape
    va, vb = tape.values[a.i], tape.values[b.i]
    try:
        out = forward(va, vb)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: shapes {va.shape} and {vb.shape} incompatible") from exc
    need = tape.needs_grad[a.i] or tape.needs_grad[b.i]
    vjp = vjp_builder(va, vb, out) if need else None
    return tape._record(op, out, (a.i, b.i), vjp, need)


def _unary(op: str, a: Var, forward, vjp_builder) -> Var:
    tape = a.tape
    va = tape.values[a.i]
    out = forward(va)
    need = tape.needs_grad[a.i]
    vjp = vjp_builder(va, out) if need else None
    return tape._record(op, out, (a.i,), vjp, need)


def add(a: Var, b: Var) -> Var:
    return _binary(
        "add", a, b, np.add,
        lambda va, vb, out: lambda g: (_unbroadcast(g, va.shape), _unbroadcast(g, vb.shape)),
    )


def sub(a: Var, b: Var) -> Var:
    return _binary(
        "sub", a, b, np.subtract,
        lambda va, vb, out: lambda g: (_unbroadcast(g, va.shape), _unbroadcast(-g, vb.shape)),
    )


def mul(a: Var, b: Var) -> Var:
    return _binary(
        "mul", a, b, np.multiply,
        lambda va, vb, out: lambda g: (
            _unbroadcast(g * vb, va.shape),
            _unbroadcast(g * va, vb.shape),
        ),
    )


def neg(a: Var) -> Var:
    return _unary("neg", a, np.negative, lambda va, out: lambda g: (-g,))


def matmul(a: Var, b: Var) -> Var:
    va, vb = a.tape.values[a.i], b.tape.values[b.i]
    if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {va.shape} and {vb.shape} incompatible")
    return _binary(
        "matmul", a, b, np.matmul,
        lambda va, vb, out: lambda g: (g @ vb.T, va.T @ g),
    )


def relu(a: Var) -> Var:
    return _unary(
        "relu", a,
        lambda va: np.maximum(va, 0.0),
        lambda va, out: lambda g: (np.where(va > 0.0, g, 0.0),),
    )


def tanh(a: Var) -> Var:
    return _unary("tanh", a, np.tanh, lambda va, out: lambda g: (_tanh_vjp(out, g),))


def _tanh_vjp(out: np.ndarray, g: np.ndarray) -> np.ndarray:
    return g * (1.0 - out * out)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Var) -> Var:
    return _unary(
        "sigmoid", a, _stable_sigmoid,
        lambda va, out: lambda g: (g * out * (1.0 - out),),
    )


def exp(a: Var) -> Var:
    return _unary("exp", a, np.exp, lambda va, out: lambda g: (g * out,))


def log(a: Var) -> Var:
    """Natural log of max(x, LOG_CLAMP); gradient is zero on the clamped region."""
    return _unary(
        "log", a,
        lambda va: np.log(np.maximum(va, LOG_CLAMP)),
        lambda va, out: lambda g: (np.where(va >= LOG_CLAMP, g / np.maximum(va, LOG_CLAMP), 0.0),),
    )


def softmax(a: Var) -> Var:
    """Row-wise softmax over the last axis, stabilized by subtracting the row max."""

    def forward(va):
        shifted = va - va.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=-1, keepdims=True)

    def vjp_builder(va, out):
        def vjp(g):
            inner = (g * out).sum(axis=-1, keepdims=True)
            return (out * (g - inner),)

        return vjp

    return _unary("softmax", a, forward, vjp_builder)


def reduce_sum(a: Var) -> Var:
    return _unary(
        "sum", a,
        lambda va: np.asarray(va.sum()),
        lambda va, out: lambda g: (np.broadcast_to(g, va.shape),),
    )


def reduce_mean(a: Var) -> Var:
    return _unary(
        "mean", a,
        lambda va: np.asarray(va.mean()),
        lambda va, out: lambda g: (np.broadcast_to(g / va.size, va.shape),),
    )


def concat(a: Var, b: Var) -> Var:
    va, vb = a.tape.values[a.i], b.tape.values[b.i]
    if va.shape[:-1] != vb.shape[:-1]:
        raise ShapeMismatch(f"concat: shapes {va.shape} and {vb.shape} incompatible")
    split = va.shape[-1]
    return _binary(
        "concat", a, b,
        lambda va, vb: np.concatenate([va, vb], axis=-1),
        lambda va, vb, out: lambda g: (g[..., :split], g[..., split:]),
    )


def slice_last(a: Var, start: int, stop: int) -> Var:
    va = a.tape.values[a.i]
    if not (0 <= start <= stop <= va.shape[-1]):
        raise ShapeMismatch(f"slice: [{start}:{stop}] out of range for shape {va.shape}")

    def vjp_builder(va, out):
        def vjp(g):
            full = np.zeros_like(va)
            full[..., start:stop] = g
            return (full,)

        return vjp

    return _unary("slice", a, lambda va: va[..., start:stop].copy(), vjp_builder)


def backward(tape: Tape, loss: Var) -> list[np.ndarray | None]:
    """Reverse sweep from `loss`; returns (and stores) per-node adjoints.

    The sweep order is fixed by node index, so replaying the same tape is
    bitwise reproducible.
    """
    if tape.values[loss.i].size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    adjoints: list[np.ndarray | None] = [None] * len(tape.values)
    adjoints[loss.i] = np.ones_like(tape.values[loss.i])
    for i in range(loss.i, -1, -1):
        g = adjoints[i]
        if g is None:
            continue
        vjp = tape.vjps[i]
        if vjp is None:
            continue
        for j, gj in zip(tape.inputs[i], vjp(g)):
            if gj is None or not tape.needs_grad[j]:
                continue
            if adjoints[j] is None:
                adjoints[j] = gj
            else:
                adjoints[j] = adjoints[j] + gj
    tape.gradients = adjoints
    return adjoints


def gradients(tape: Tape, loss: Var, params: dict[str, Var]) -> dict[str, np.ndarray]:
    """Adjoint for every named parameter; unreachable parameters get zeros."""
    adjoints = backward(tape, loss)
    out = {}
    for name, var in params.items():
        g = adjoints[var.i]
        out[name] = np.zeros_like(var.value) if g is None else g
    return out


def grad_check(
    build: Callable[[Tape, dict[str, Var]], Var],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    `build` must be deterministic: it gets a fresh tape plus parameter leaves
    and returns the scalar loss Var.  Relative error for one element is
    |analytic - numeric| / max(1, |numeric|).
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"grad_check: step {h} outside [1e-7, 1e-3]")

    def evaluate(arrays: dict[str, np.ndarray]) -> float:
        tape = Tape()
        leaves = {name: tape.parameter(a) for name, a in arrays.items()}
        return float(build(tape, leaves).value)

    tape = Tape()
    leaves = {name: tape.parameter(a) for name, a in params.items()}
    loss = build(tape, leaves)
    analytic = gradients(tape, loss, leaves)

    worst = 0.0
    for name, base in params.items():
        flat = base.ravel()
        for k in range(flat.size):
            orig = flat[k]
            perturbed = {n: (a.copy() if n == name else a) for n, a in params.items()}
            pflat = perturbed[name].ravel()
            pflat[k] = orig + h
            up = evaluate(perturbed)
            pflat[k] = orig - h
            down = evaluate(perturbed)
            numeric = (up - down) / (2.0 * h)
            err = abs(analytic[name].ravel()[k] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
