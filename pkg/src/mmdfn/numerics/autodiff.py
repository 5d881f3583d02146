"""Minimal reverse-mode differentiation over dense float64 numpy arrays.

Every operation on a :class:`Tensor` that depends on a differentiable input
records a node (value, parents, local backward rule). :func:`backward` orders
the recorded nodes topologically and replays the local rules in reverse, so
each node is visited once.

Tensors built from plain arrays are constants unless ``requires_grad=True``;
operations whose inputs are all constants record nothing, which makes repeated
loss evaluation (finite differences, inference) cheap.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .. import kernels


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A documented precondition of a numeric routine was violated."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_rule", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._rule: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value: np.ndarray, parents: Iterable[Tensor], rule) -> Tensor:
    parents = tuple(parents)
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._rule = rule
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# elementwise arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _record(a.data * c, (a,), lambda g: (g * c,))


def power(a: Tensor, p: float) -> Tensor:
    """``a ** p`` for a scalar exponent; the gradient at 0 is taken as 0 unless p == 1."""
    value = a.data ** p

    def rule(g):
        if p == 1.0:
            return (g,)
        at_zero = a.data == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            local = p * np.where(at_zero, 1.0, a.data) ** (p - 1.0)
        return (g * np.where(at_zero, 0.0, local),)

    return _record(value, (a,), rule)


def exp(a: Tensor) -> Tensor:
    value = np.exp(a.data)
    return _record(value, (a,), lambda g: (g * value,))


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


# activations

def sigmoid(a: Tensor) -> Tensor:
    value = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(value, (a,), lambda g: (g * value * (1.0 - value),))


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    return _record(value, (a,), lambda g: (g * (1.0 - value * value),))


def relu(a: Tensor) -> Tensor:
    live = a.data > 0.0
    return _record(np.where(live, a.data, 0.0), (a,), lambda g: (np.where(live, g, 0.0),))


def log_softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"log_softmax_rows expects a matrix, got shape {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    value = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(value)
    return _record(value, (a,),
                   lambda g: (g - probs * g.sum(axis=1, keepdims=True),))


def softmax_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {a.shape}")
    shifted = np.exp(a.data - a.data.max(axis=1, keepdims=True))
    value = shifted / shifted.sum(axis=1, keepdims=True)
    return _record(value, (a,),
                   lambda g: (value * (g - (g * value).sum(axis=1, keepdims=True)),))


_ACTIVATIONS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "softmax-rows": softmax_rows}


def activation(kind: str, x) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(as_tensor(x))


# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
    return _record(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _record(a.data.T, (a,), lambda g: (g.T,))


def linear(x, w, b=None) -> Tensor:
    """Row-wise affine map: row i of the result is ``w @ x[i] + b``."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is None:
        return _record(x.data @ w.data.T, (x, w), lambda g: (g @ w.data, g.T @ x.data))
    b = as_tensor(b)
    if b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    return _record(x.data @ w.data.T + b.data, (x, w, b),
                   lambda g: (g @ w.data, g.T @ x.data, g.sum(axis=0)))


# reductions and reshaping

def total(a: Tensor) -> Tensor:
    return _record(np.array(a.data.sum()), (a,), lambda g: (np.full(a.shape, g),))


def sum_rows(a: Tensor) -> Tensor:
    """Sum over axis 1 of a matrix."""
    return _record(a.data.sum(axis=1), (a,),
                   lambda g: (np.repeat(g[:, None], a.shape[1], axis=1),))


def l2_norm(a: Tensor) -> Tensor:
    """Euclidean norm of all entries; subgradient 0 at the origin."""
    value = np.sqrt(np.sum(a.data * a.data))

    def rule(g):
        if value == 0.0:
            return (np.zeros_like(a.data),)
        return (g * a.data / value,)

    return _record(np.array(value), (a,), rule)


def concat(parts: Sequence, axis: int) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    try:
        value = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat along axis {axis}: shapes {[p.shape for p in parts]}") from None
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def rule(g):
        return [np.take(g, range(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])]

    return _record(value, parts, rule)


def take_rows(a: Tensor, index) -> Tensor:
    """Gather rows ``a[index]``; repeated indices accumulate on the way back."""
    index = np.asarray(index, dtype=np.intp)

    def rule(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return _record(a.data[index], (a,), rule)


def pick(a: Tensor, cols) -> Tensor:
    """Vector ``a[i, cols[i]]``."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.shape[0])

    def rule(g):
        out = np.zeros_like(a.data)
        out[rows, cols] = g
        return (out,)

    return _record(a.data[rows, cols], (a,), rule)


def reverse_rows(a: Tensor) -> Tensor:
    return take_rows(a, np.arange(a.shape[0] - 1, -1, -1))


# fused primitives backed by the kernel backend

def gru_recurrence(gi: Tensor, w_hh: Tensor, b_hh: Tensor) -> Tensor:
    """Hidden-state sequence of a GRU given its input projections ``gi`` (T x 3H)."""
    if gi.data.ndim != 2 or w_hh.data.ndim != 2 or gi.shape[1] != w_hh.shape[0] \
            or w_hh.shape[0] != 3 * w_hh.shape[1] or b_hh.shape != (w_hh.shape[0],):
        raise ShapeError(f"gru_recurrence: projections {gi.shape}, recurrent weight "
                         f"{w_hh.shape}, bias {b_hh.shape}")
    impl = kernels.active
    hs, r, z, n, ghn = impl.gru_forward(np.ascontiguousarray(gi.data), w_hh.data, b_hh.data)

    def rule(g):
        return impl.gru_backward(np.ascontiguousarray(g), w_hh.data, hs, r, z, n, ghn)

    return _record(hs, (gi, w_hh, b_hh), rule)


def angular_adjacency(x: Tensor, mask: np.ndarray) -> Tensor:
    """Masked matrix of ``1 - angle(x_i, x_j) / pi``."""
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if mask.shape != (x.shape[0], x.shape[0]):
        raise ShapeError(f"angular_adjacency: mask {mask.shape} for {x.shape[0]} rows")
    impl = kernels.active
    xd = np.ascontiguousarray(x.data)
    adj, cos = impl.angular_adjacency_forward(xd, mask)
    return _record(adj, (x,), lambda g: (impl.angular_adjacency_backward(
        np.ascontiguousarray(g), xd, mask, cos),))


def sym_normalize(adj: Tensor) -> Tensor:
    """``D^-1/2 (A + I) D^-1/2`` with D the row sums of ``A + I``."""
    n = adj.shape[0]
    a_tilde = adj.data + np.eye(n)
    deg = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    value = a_tilde * np.outer(inv_sqrt, inv_sqrt)

    def rule(g):
        dtilde = g * inv_sqrt[:, None] * inv_sqrt[None, :]
        # d(inv_sqrt_i)/d(deg_i) = -0.5 deg_i^-1.5
        dinv = (g * a_tilde * inv_sqrt[None, :]).sum(axis=1) \
            + (g * a_tilde * inv_sqrt[:, None]).sum(axis=0)
        ddeg = dinv * (-0.5) * inv_sqrt ** 3
        return (dtilde + ddeg[:, None],)

    return _record(value, (adj,), rule)


# reverse pass

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Mapping[str, Tensor] | None = None) -> dict[str, np.ndarray]:
    """Accumulate d(loss)/d(node) into ``.grad`` of every recorded ancestor.

    Returns ``{name: gradient}`` for ``params`` (zeros for parameters the loss
    does not depend on).
    """
    if loss.data.shape != () and loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.requires_grad:
        order = _topological(loss)
        grads[id(loss)] = np.ones_like(loss.data)
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None or node._rule is None:
                continue
            for parent, pg in zip(node._parents, node._rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = np.asarray(pg, dtype=np.float64).reshape(parent.shape)
        for node in order:
            if node._rule is None:
                node.grad = grads.get(id(node), np.zeros_like(node.data))
    if params is None:
        return {}
    return {name: grads.get(id(t), np.zeros_like(t.data)).copy() for name, t in params.items()}
