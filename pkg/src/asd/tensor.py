"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every value in the library flows through :class:`Tensor`: a row-major
float64 numpy array plus an optional gradient buffer. Operations link each
result to its inputs together with a closure that maps the output adjoint
to input adjoints; ``backward`` walks those links once, in reverse
topological order. Broadcasting is deliberately restricted to the two
forms the rest of the library needs (scalar against anything, row vector
against matrix) so every gradient rule stays auditable.

Numerical guards: softmax subtracts the per-row max, ``log`` clamps its
argument at ``LOG_EPS``, ``exp`` clamps its argument below the float64
overflow threshold, and row normalization divides by ``max(norm, eps)``.
Finite inputs therefore never produce NaN or Inf.
"""

from __future__ import annotations

import itertools
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ShapeError

LOG_EPS = 1e-12
_EXP_MAX = 709.0  # np.exp(709.0) is the largest finite power of e in float64

_ids = itertools.count()


class TapeNode(NamedTuple):
    op: str
    input_ids: tuple
    output_id: int


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_op", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keep row-major without promoting 0-d to 1-d
        if arr.size == 0:
            raise ShapeError(f"tensors must be non-empty, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # Python arithmetic sugar; everything routes through the module ops.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def op_result(data, op: str, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op output, linking it to its inputs when gradients are needed.

    ``backward`` takes the output adjoint and returns one adjoint (or None)
    per parent. Composite ops in other modules (convolution, pooling) build
    their nodes through this hook so a single tape serves the whole model.
    """
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._op = op
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# broadcasting (scalar->any, row-vector->matrix only)
# ---------------------------------------------------------------------------

def _broadcast_ok(a: Tensor, b: Tensor) -> bool:
    if a.shape == b.shape:
        return True
    if a.data.ndim == 0 or b.data.ndim == 0:
        return True
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return True
    if a.data.ndim == 1 and b.data.ndim == 2 and b.shape[1] == a.shape[0]:
        return True
    return False


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    if len(shape) == 1 and grad.ndim == 2 and grad.shape[1] == shape[0]:
        return grad.sum(axis=0)
    raise ShapeError(f"cannot reduce gradient of shape {grad.shape} to {shape}")


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    if not _broadcast_ok(a, b):
        raise ShapeError(
            f"{op}: cannot broadcast {a.shape} with {b.shape} "
            "(only scalar->any and row-vector->matrix are supported)"
        )


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return op_result(a.data + b.data, "add", (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return op_result(a.data - b.data, "sub", (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return op_result(a.data * b.data, "mul", (a, b), backward)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g * c,)

    return op_result(a.data * c, "scalar_mul", (a,), backward)


def exp(a: Tensor) -> Tensor:
    clipped = np.minimum(a.data, _EXP_MAX)
    out = np.exp(clipped)
    live = a.data <= _EXP_MAX

    def backward(g):
        return (g * out * live,)

    return op_result(out, "exp", (a,), backward)


def log(a: Tensor) -> Tensor:
    """Natural log with the argument clamped at LOG_EPS; finite for any x >= 0."""
    clamped = np.maximum(a.data, LOG_EPS)
    live = a.data > LOG_EPS

    def backward(g):
        return (g * live / clamped,)

    return op_result(np.log(clamped), "log", (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * out * (1.0 - out),)

    return op_result(out, "sigmoid", (a,), backward)


def relu(a: Tensor) -> Tensor:
    live = a.data > 0  # the kink at 0 takes gradient 0

    def backward(g):
        return (g * live,)

    return op_result(np.maximum(a.data, 0.0), "relu", (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        return (g * 2.0 * a.data,)

    return op_result(a.data * a.data, "square", (a,), backward)


# ---------------------------------------------------------------------------
# matrix ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return op_result(a.data @ b.data, "matmul", (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d operand, got {a.shape}")

    def backward(g):
        return (np.ascontiguousarray(g.T),)

    return op_result(a.data.T, "transpose", (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def backward(g):
        return (g.reshape(a.shape),)

    return op_result(a.data.reshape(shape), "reshape", (a,), backward)


def row_l2_normalize(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Divide each row by max(||row||_2, eps); safe on zero rows."""
    if a.data.ndim != 2:
        raise ShapeError(f"row_l2_normalize needs a 2-d operand, got {a.shape}")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    norms = np.sqrt((a.data * a.data).sum(axis=1))
    denom = np.maximum(norms, eps)
    out = a.data / denom[:, None]
    small = norms < eps

    def backward(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        full = (g - out * dot) / denom[:, None]
        return (np.where(small[:, None], g / eps, full),)

    return op_result(out, "row_l2_normalize", (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting each row's max."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-d operand, got {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return op_result(out, "softmax_rows", (a,), backward)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        return (np.full(a.shape, float(g)),)

    return op_result(a.data.sum(), "sum_all", (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.size

    def backward(g):
        return (np.full(a.shape, float(g) / n),)

    return op_result(a.data.mean(), "mean_all", (a,), backward)


def mean_rows(a: Tensor) -> Tensor:
    """Column means over the m rows of an (m, k) tensor, as a length-k vector."""
    if a.data.ndim != 2:
        raise ShapeError(f"mean_rows needs a 2-d operand, got {a.shape}")
    m = a.shape[0]

    def backward(g):
        return (np.broadcast_to(g / m, a.shape).copy(),)

    return op_result(a.data.mean(axis=0), "mean_rows", (a,), backward)


def row_sums(a: Tensor) -> Tensor:
    """Per-row sums of an (m, k) tensor, as a length-m vector."""
    if a.data.ndim != 2:
        raise ShapeError(f"row_sums needs a 2-d operand, got {a.shape}")

    def backward(g):
        return (np.broadcast_to(g[:, None], a.shape).copy(),)

    return op_result(a.data.sum(axis=1), "row_sums", (a,), backward)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order: every node appears after all of its parents."""
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
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def tape_nodes(root: Tensor) -> list[TapeNode]:
    """The recorded tape reaching ``root``, in forward (topological) order."""
    return [
        TapeNode(t._op, tuple(p._id for p in t._parents), t._id)
        for t in _topo_order(root)
        if t._parents
    ]


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into .grad for every tracked ancestor of loss."""
    if loss.data.ndim != 0:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward needs a loss produced through tracked operations")
    order = _topo_order(loss)
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.asarray(g, dtype=np.float64).reshape(parent.shape)
            else:
                parent.grad = parent.grad + np.asarray(g, dtype=np.float64).reshape(parent.shape)


# ---------------------------------------------------------------------------
# independent gradient oracle
# ---------------------------------------------------------------------------

def finite_diff_check(fn, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between central differences and backward() on fn at x.

    ``fn`` must be a pure scalar-valued function of one tensor. The error per
    coordinate is |fd - ad| / max(|fd|, |ad|, 1e-8).
    """
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    out = fn(leaf)
    if out.data.ndim != 0:
        raise ValueError("finite_diff_check needs a scalar-valued fn")
    backward(out)
    ad = leaf.grad.copy() if leaf.grad is not None else np.zeros_like(leaf.data)

    flat = x.data.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = fn(Tensor(bumped.reshape(x.shape))).item()
        bumped[i] = flat[i] - h
        f_minus = fn(Tensor(bumped.reshape(x.shape))).item()
        fd[i] = (f_plus - f_minus) / (2.0 * h)

    ad_flat = ad.reshape(-1)
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(ad_flat)), 1e-8)
    return float(np.max(np.abs(fd - ad_flat) / denom))
