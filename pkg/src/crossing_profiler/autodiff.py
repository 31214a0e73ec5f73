"""Reverse-mode automatic differentiation over small dense arrays.

The engine is deliberately tiny: a Tensor wraps one numpy array, remembers the
tensors it was computed from, and carries a closure that pushes gradients back
to them. Calling backward() on a scalar loss walks the graph once in reverse
topological order. There is no broadcasting magic beyond what the individual
operations document, no views are shared between graphs, and a graph is only
ever touched by the thread that built it. Frozen parameter arrays may be read
concurrently.

Precision is a constructor-level choice: float64 everywhere by default (tests
and oracles rely on it), float32 permitted for faster training. The two never
meet inside one graph; binary operations reject mixed dtypes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """A node in the computation graph.

    data holds the value, grad a same-shape accumulator that starts at zero.
    Ranks 0 through 3 are supported; rank 0 only ever appears as the result of
    a reduction.
    """

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, dtype=None, _parents: tuple = (), _backward=None):
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in _ALLOWED_DTYPES:
                arr = arr.astype(np.float64)
        else:
            arr = np.asarray(data, dtype=dtype)
            if arr.dtype not in _ALLOWED_DTYPES:
                raise ContractError(f"unsupported dtype {arr.dtype}; use float32 or float64")
        if arr.ndim > 3:
            raise ShapeError(f"rank {arr.ndim} tensor not supported (max rank 3)")
        self.data = np.ascontiguousarray(arr)
        self.grad = np.zeros_like(self.data)
        self._parents = _parents
        self._backward = _backward

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    def __radd__(self, other):
        return add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def backward(self) -> None:
        backward(self)


def _check_same_dtype(a: Tensor, b: Tensor) -> None:
    # Mixed precision inside one graph is a silent-corruption hazard; forbid it.
    if a.data.dtype != b.data.dtype:
        raise ContractError(f"mixed dtypes in one graph: {a.data.dtype} vs {b.data.dtype}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the original shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise arithmetic ---------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    _check_same_dtype(a, b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def _back():
        a.grad += _unbroadcast(out.grad, a.data.shape)
        b.grad += _unbroadcast(out.grad, b.data.shape)

    out._backward = _back
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = Tensor(a.data - b.data, _parents=(a, b))

    def _back():
        a.grad += _unbroadcast(out.grad, a.data.shape)
        b.grad -= _unbroadcast(out.grad, b.data.shape)

    out._backward = _back
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    _check_same_dtype(a, b)
    out = Tensor(a.data * b.data, _parents=(a, b))

    def _back():
        a.grad += _unbroadcast(out.grad * b.data, a.data.shape)
        b.grad += _unbroadcast(out.grad * a.data, b.data.shape)

    out._backward = _back
    return out


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = Tensor(a.data / b.data, _parents=(a, b))

    def _back():
        a.grad += _unbroadcast(out.grad / b.data, a.data.shape)
        b.grad -= _unbroadcast(out.grad * a.data / (b.data * b.data), b.data.shape)

    out._backward = _back
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, _parents=(a,))

    def _back():
        a.grad -= out.grad

    out._backward = _back
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar without adding a constant node."""
    c = float(c)
    out = Tensor(a.data * c, _parents=(a,))

    def _back():
        a.grad += out.grad * c

    out._backward = _back
    return out


def add_scalar(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data + float(c), _parents=(a,))

    def _back():
        a.grad += out.grad

    out._backward = _back
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise a**exponent for a fixed real exponent."""
    exponent = float(exponent)
    out = Tensor(a.data ** exponent, _parents=(a,))

    def _back():
        a.grad += out.grad * exponent * a.data ** (exponent - 1.0)

    out._backward = _back
    return out


# -- linear algebra -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Accepts [m x k] @ [k x n], and the matrix-vector forms [m x k] @ [k] and
    [k] @ [k x n]. Anything else is a shape error naming both operands.
    """
    _check_same_dtype(a, b)
    ash, bsh = a.data.shape, b.data.shape
    ok = (
        (len(ash) == 2 and len(bsh) == 2 and ash[1] == bsh[0])
        or (len(ash) == 2 and len(bsh) == 1 and ash[1] == bsh[0])
        or (len(ash) == 1 and len(bsh) == 2 and ash[0] == bsh[0])
    )
    if not ok:
        raise ShapeError(f"matmul shapes incompatible: {ash} @ {bsh}")
    out = Tensor(a.data @ b.data, _parents=(a, b))

    if len(ash) == 2 and len(bsh) == 2:

        def _back():
            a.grad += out.grad @ b.data.T
            b.grad += a.data.T @ out.grad

    elif len(bsh) == 1:

        def _back():
            a.grad += np.outer(out.grad, b.data)
            b.grad += a.data.T @ out.grad

    else:

        def _back():
            a.grad += b.data @ out.grad
            b.grad += np.outer(a.data, out.grad)

    out._backward = _back
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs rank 2, got shape {a.data.shape}")
    out = Tensor(a.data.T, _parents=(a,))

    def _back():
        a.grad += out.grad.T

    out._backward = _back
    return out


# -- shape surgery --------------------------------------------------------


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an existing axis; gradient splits back per input."""
    tensors = tuple(tensors)
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _back():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            t.grad += out.grad[tuple(idx)]

    out._backward = _back
    return out


def row(a: Tensor, i: int) -> Tensor:
    """Extract row i of a rank-2 tensor as a rank-1 tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"row() needs rank 2, got shape {a.data.shape}")
    if not 0 <= i < a.data.shape[0]:
        raise ShapeError(f"row {i} out of range for shape {a.data.shape}")
    out = Tensor(a.data[i], _parents=(a,))

    def _back():
        a.grad[i] += out.grad

    out._backward = _back
    return out


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack rank-1 tensors of equal length into a rank-2 tensor."""
    vectors = tuple(vectors)
    if not vectors:
        raise ContractError("stack_rows needs at least one vector")
    for v in vectors:
        if v.data.ndim != 1:
            raise ShapeError(f"stack_rows takes rank-1 tensors, got shape {v.data.shape}")
        _check_same_dtype(vectors[0], v)
    out = Tensor(np.stack([v.data for v in vectors]), _parents=vectors)

    def _back():
        for j, v in enumerate(vectors):
            v.grad += out.grad[j]

    out._backward = _back
    return out


# -- reductions -----------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(), _parents=(a,))

    def _back():
        a.grad += out.grad

    out._backward = _back
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = Tensor(a.data.sum() / n, _parents=(a,))

    def _back():
        a.grad += out.grad / n

    out._backward = _back
    return out


def sum_along(a: Tensor, axis: int) -> Tensor:
    """Sum along one axis, keeping it as size 1 so broadcasting lines up."""
    out = Tensor(a.data.sum(axis=axis, keepdims=True), _parents=(a,))

    def _back():
        a.grad += np.broadcast_to(out.grad, a.data.shape)

    out._backward = _back
    return out


# -- nonlinearities ---------------------------------------------------------


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # Branch by sign so exp() never sees a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, numerically stable for any magnitude input."""
    out = Tensor(_sigmoid_values(a.data), _parents=(a,))

    def _back():
        a.grad += out.grad * out.data * (1.0 - out.data)

    out._backward = _back
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data), _parents=(a,))

    def _back():
        a.grad += out.grad * (1.0 - out.data * out.data)

    out._backward = _back
    return out


def relu(a: Tensor) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is taken as 0."""
    out = Tensor(np.maximum(a.data, 0.0), _parents=(a,))

    def _back():
        a.grad += out.grad * (a.data > 0.0)

    out._backward = _back
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a rank-2 tensor, stabilized by max subtraction."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs rank 2, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y, _parents=(a,))

    def _back():
        g = out.grad
        dot = (g * y).sum(axis=1, keepdims=True)
        a.grad += (g - dot) * y

    out._backward = _back
    return out


# -- reverse pass -----------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Run one reverse pass from a scalar loss.

    Topological order is built iteratively (graphs can be thousands of nodes
    deep for long sequences) and is a pure function of graph structure, so
    gradients are bit-identical across repeated runs. Every reachable node is
    visited exactly once; leaf gradients accumulate.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad[...] = 0.0


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    """Moment buffers plus hyperparameters for bias-corrected Adam."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place.

    m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, then
    p <- p - lr * m_hat / (sqrt(v_hat) + eps) with m_hat = m/(1-b1^t) etc.
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ContractError(
            f"adam_step length mismatch: {len(params)} params, {len(grads)} grads, "
            f"{len(state.m)} moment buffers"
        )
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_step shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
