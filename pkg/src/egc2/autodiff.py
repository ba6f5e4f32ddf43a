"""Minimal dense reverse-mode differentiation engine.

Tensors wrap float64 arrays whose last two axes carry matrix semantics;
a leading axis, when present, is a batch of independent samples sharing
the same recorded program. There is no implicit broadcasting between
operands beyond 2-D weights applied across a batch.

Every primitive records its operands and a backward closure on the
result, so ``backward`` on a scalar loss replays the tape in reverse
topological order. Recording can be suspended with ``no_grad`` for
cheap inference passes.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np


class DimensionError(ValueError):
    """Operand shapes incompatible with the primitive, named in the message."""


class ContractError(ValueError):
    """A primitive was driven outside its contract (e.g. non-scalar loss)."""


_grad_enabled = True

PROB_FLOOR = 1e-12


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim == 1:
            self.data = self.data.reshape(1, -1)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        # tuple of (parent_tensor, fn mapping output-grad -> parent-grad)
        self._parents: tuple = ()

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _record(out: Tensor, parents) -> Tensor:
    if _grad_enabled:
        tracked = tuple((p, fn) for p, fn in parents
                        if p.requires_grad or p._parents)
        if tracked:
            out._parents = tracked
            out.requires_grad = True
    return out


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data))
    return _record(out, [
        (a, lambda g: _unbroadcast(np.matmul(g, _swap(b.data)), a.shape)),
        (b, lambda g: _unbroadcast(np.matmul(_swap(a.data), g), b.shape)),
    ])


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} + {b.shape}")
    out = Tensor(a.data + b.data)
    return _record(out, [(a, lambda g: g), (b, lambda g: g)])


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 2-D bias across any leading batch axis."""
    if bias.shape != x.shape[-2:]:
        raise DimensionError(f"add_bias: {x.shape} + {bias.shape}")
    out = Tensor(x.data + bias.data)
    return _record(out, [
        (x, lambda g: g),
        (bias, lambda g: _unbroadcast(g, bias.shape)),
    ])


def transpose(x: Tensor) -> Tensor:
    out = Tensor(_swap(x.data))
    return _record(out, [(x, _swap)])


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return _record(out, [(x, lambda g: g * mask)])


def row_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y)

    def back(g):
        return y * (g - (g * y).sum(axis=-1, keepdims=True))

    return _record(out, [(x, back)])


def concat_rows(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise DimensionError("concat_rows: no operands")
    lead = tensors[0].shape[:-2] + (tensors[0].shape[-1],)
    for t in tensors:
        if t.shape[:-2] + (t.shape[-1],) != lead:
            raise DimensionError(
                f"concat_rows: incompatible shapes "
                f"{[t.shape for t in tensors]}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=-2))

    parents = []
    offset = 0
    for t in tensors:
        rows = t.shape[-2]
        start = offset

        def back(g, start=start, rows=rows):
            return g[..., start:start + rows, :]

        parents.append((t, back))
        offset += rows
    return _record(out, parents)


def cross_entropy(probs: Tensor, labels) -> Tensor:
    """Summed negative log-likelihood of the true classes.

    ``probs`` is a probability row vector (1, q) with an int label, or a
    batch (B, 1, q) with an int vector of length B. Probabilities are
    floored at 1e-12 before the log; floored entries get zero gradient.
    """
    if probs.data.ndim == 2:
        data = probs.data[None]
        labels_arr = np.array([int(labels)])
    else:
        data = probs.data
        labels_arr = np.asarray(labels, dtype=int)
        if labels_arr.shape != (data.shape[0],):
            raise DimensionError(
                f"cross_entropy: {labels_arr.shape} labels for batch "
                f"{data.shape}")
    if data.shape[-2] != 1:
        raise DimensionError(f"cross_entropy: expected row vectors, "
                             f"got {probs.shape}")
    batch = np.arange(data.shape[0])
    picked = data[batch, 0, labels_arr]
    clamped = np.maximum(picked, PROB_FLOOR)
    out = Tensor(np.array([[-np.log(clamped).sum()]]))

    def back(g):
        grad = np.zeros_like(data)
        live = picked >= PROB_FLOOR
        grad[batch, 0, labels_arr] = np.where(live, -g[0, 0] / clamped, 0.0)
        return grad if probs.data.ndim == 3 else grad[0]

    return _record(out, [(probs, back)])


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * c)
    return _record(out, [(x, lambda g: g * c)])


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"hadamard: {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data)
    return _record(out, [
        (a, lambda g: g * b.data),
        (b, lambda g: g * a.data),
    ])


def rsqrt(x: Tensor) -> Tensor:
    if x.data.min() <= 0:
        raise ContractError("rsqrt: inputs must be positive")
    y = 1.0 / np.sqrt(x.data)
    out = Tensor(y)
    return _record(out, [(x, lambda g: g * (-0.5) * y / x.data)])


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.array([[x.data.sum()]]))
    return _record(out, [(x, lambda g: np.full_like(x.data, g[0, 0]))])


def col_max(x: Tensor) -> Tensor:
    """Column-wise max over the row axis, keeping a single row."""
    idx = x.data.argmax(axis=-2)
    out = Tensor(x.data.max(axis=-2, keepdims=True))

    def back(g):
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, idx[..., None, :], g, axis=-2)
        return grad

    return _record(out, [(x, back)])


_PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "add_bias": add_bias,
    "transpose": transpose,
    "relu": relu,
    "row_softmax": row_softmax,
    "concat_rows": concat_rows,
    "cross_entropy": cross_entropy,
    "scalar_mul": scalar_mul,
    "hadamard": hadamard,
    "rsqrt": rsqrt,
    "sum_all": sum_all,
    "col_max": col_max,
}


def apply(kind: str, *operands):
    """Dispatch a recorded primitive by name."""
    try:
        fn = _PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"unknown primitive {kind!r}") from None
    return fn(*operands)


def backward(loss: Tensor, leaves=None) -> dict:
    """Accumulate d(loss)/d(leaf) for every requires_grad leaf in the tape.

    Returns a map from Tensor to gradient array. Leaves passed explicitly
    that never participated in the forward pass get zero gradients. The
    ``grad`` field of every reached leaf is (re)set, never accumulated,
    so repeated calls yield identical results.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, "
                            f"got shape {loss.shape}")

    order: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, fn in node._parents:
            contribution = fn(g)
            pid = id(parent)
            by_id[pid] = parent
            if pid in grads:
                grads[pid] = grads[pid] + contribution
            else:
                grads[pid] = contribution

    result: dict[Tensor, np.ndarray] = {}
    for tid, tensor in by_id.items():
        if tensor.requires_grad and not tensor._parents:
            tensor.grad = grads[tid]
            result[tensor] = grads[tid]
    if leaves is not None:
        for leaf in leaves:
            if leaf not in result:
                leaf.grad = np.zeros_like(leaf.data)
                result[leaf] = leaf.grad
    return result


class OptimizerState:
    """Adaptive-moment accumulators for a fixed parameter list."""

    def __init__(self, params, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]


def adam_step(params, grads: dict, state: OptimizerState):
    """One bias-corrected adaptive-moment update, applied in place."""
    if list(params) != state.params:
        raise ValueError("adam_step: params do not match optimizer state")
    state.step_count += 1
    t = state.step_count
    for k, p in enumerate(state.params):
        g = grads.get(p)
        if g is None:
            g = np.zeros_like(p.data)
        state.m[k] = state.beta1 * state.m[k] + (1 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1 - state.beta2) * g * g
        m_hat = state.m[k] / (1 - state.beta1 ** t)
        v_hat = state.v[k] / (1 - state.beta2 ** t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat)
                                                         + state.eps)
    return params, state


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> Tensor:
    s = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-s, s, size=(rows, cols)), requires_grad=True)
