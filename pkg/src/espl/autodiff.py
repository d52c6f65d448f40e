"""Define-by-run reverse-mode automatic differentiation over float64 arrays.

Operations record themselves on the innermost active :class:`Tape` when at
least one input requires a gradient.  Outside a tape every primitive just
computes values, which doubles as a cheap no-grad mode for rollouts.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Node",
    "Tape",
    "ShapeError",
    "NonFiniteError",
    "leaf",
    "constant",
    "backward",
    "grad_check",
]

_LOG_2PI = math.log(2.0 * math.pi)
_local = threading.local()


class ShapeError(ValueError):
    """Raised when the input shapes of a primitive do not conform."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {', '.join(map(str, shapes))}")


class NonFiniteError(FloatingPointError):
    """Raised by :func:`grad_check` when a value or gradient is not finite."""

    def __init__(self, message: str, coordinate=None):
        self.coordinate = coordinate
        super().__init__(message)


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class Tape:
    """Ordered record of the differentiable nodes created while active."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def backward(self, output: "Node", wrt: Sequence["Node"] | None = None):
        return backward(self, output, wrt)


class Node:
    """A value in the graph plus the recipe for pushing gradients back."""

    __slots__ = ("value", "grad", "parents", "op", "requires_grad", "_backward")
    __array_priority__ = 100.0

    def __init__(self, value, parents=(), op="leaf", requires_grad=False, backward_fn=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.op = op
        self.requires_grad = requires_grad
        self._backward = backward_fn

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Node(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return negate(self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def leaf(value, requires_grad: bool = True) -> Node:
    """Create a graph input (a parameter when ``requires_grad``)."""
    return Node(np.array(value, dtype=np.float64), requires_grad=requires_grad)


def constant(value) -> Node:
    return Node(np.asarray(value, dtype=np.float64))


def _as_node(x) -> Node:
    if isinstance(x, Node):
        return x
    return Node(np.asarray(x, dtype=np.float64))


def _make(value, parents: tuple, op: str, backward_fn) -> Node:
    stack = _local.__dict__.get("stack")
    if stack and any(p.requires_grad for p in parents):
        node = Node(value, parents, op, True, backward_fn)
        stack[-1].nodes.append(node)
        return node
    return Node(value, parents, op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    if a.shape != b.shape:
        try:
            np.broadcast_shapes(a.shape, b.shape)
        except ValueError:
            raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise binary
# ---------------------------------------------------------------------------

def add(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("add", a.value, b.value)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value + b.value, (a, b), "add",
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("sub", a.value, b.value)
    sa, sb = a.value.shape, b.value.shape
    return _make(a.value - b.value, (a, b), "sub",
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("mul", a.value, b.value)
    av, bv = a.value, b.value
    ra, rb = a.requires_grad, b.requires_grad
    return _make(av * bv, (a, b), "mul",
                 lambda g: (_unbroadcast(g * bv, av.shape) if ra else None,
                            _unbroadcast(g * av, bv.shape) if rb else None))


def div(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("div", a.value, b.value)
    av, bv = a.value, b.value
    out = av / bv

    def back(g):
        gb = g / bv
        return _unbroadcast(gb, av.shape), _unbroadcast(-gb * out, bv.shape)

    return _make(out, (a, b), "div", back)


def minimum(a, b) -> Node:
    """Elementwise min; ties send the gradient to ``a``."""
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("min", a.value, b.value)
    av, bv = a.value, b.value
    pick_a = av <= bv
    return _make(np.where(pick_a, av, bv), (a, b), "min",
                 lambda g: (_unbroadcast(g * pick_a, av.shape),
                            _unbroadcast(g * ~pick_a, bv.shape)))


def maximum(a, b) -> Node:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = _as_node(a), _as_node(b)
    _broadcast_check("max", a.value, b.value)
    av, bv = a.value, b.value
    pick_a = av >= bv
    return _make(np.where(pick_a, av, bv), (a, b), "max",
                 lambda g: (_unbroadcast(g * pick_a, av.shape),
                            _unbroadcast(g * ~pick_a, bv.shape)))


def matmul(a, b) -> Node:
    a, b = _as_node(a), _as_node(b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise ShapeError("matmul", av.shape, bv.shape)
    ra, rb = a.requires_grad, b.requires_grad
    return _make(av @ bv, (a, b), "matmul",
                 lambda g: (g @ bv.T if ra else None, av.T @ g if rb else None))


# ---------------------------------------------------------------------------
# elementwise unary
# ---------------------------------------------------------------------------

def negate(x) -> Node:
    x = _as_node(x)
    return _make(-x.value, (x,), "negate", lambda g: (-g,))


def sin(x) -> Node:
    x = _as_node(x)
    v = x.value
    return _make(np.sin(v), (x,), "sin", lambda g: (g * np.cos(v),))


def cos(x) -> Node:
    x = _as_node(x)
    v = x.value
    return _make(np.cos(v), (x,), "cos", lambda g: (-g * np.sin(v),))


def exp(x) -> Node:
    x = _as_node(x)
    out = np.exp(x.value)
    return _make(out, (x,), "exp", lambda g: (g * out,))


def log(x) -> Node:
    x = _as_node(x)
    v = x.value
    return _make(np.log(v), (x,), "log", lambda g: (g / v,))


def _sigmoid(v):
    return 0.5 * (np.tanh(0.5 * v) + 1.0)


def sigmoid(x) -> Node:
    x = _as_node(x)
    out = _sigmoid(x.value)
    return _make(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Node:
    x = _as_node(x)
    out = np.tanh(x.value)
    return _make(out, (x,), "tanh", lambda g: (g * (1.0 - out * out),))


def relu(x) -> Node:
    x = _as_node(x)
    active = x.value > 0
    return _make(np.maximum(x.value, 0.0), (x,), "relu", lambda g: (g * active,))


def linear(x, w, b, relu: bool = False) -> Node:
    """``x @ w + b`` (optionally followed by ReLU) as a single node.

    ``x`` is ``(B, n)``, ``w`` is ``(n, m)`` and ``b`` broadcasts to ``(B, m)``.
    """
    x, w, b = _as_node(x), _as_node(w), _as_node(b)
    xv, wv, bv = x.value, w.value, b.value
    if xv.ndim != 2 or wv.ndim != 2 or xv.shape[1] != wv.shape[0]:
        raise ShapeError("linear", xv.shape, wv.shape)
    out = xv @ wv
    out += bv
    active = None
    if relu:
        active = out > 0
        np.maximum(out, 0.0, out=out)
    rx, rw, rb = x.requires_grad, w.requires_grad, b.requires_grad

    def back(g):
        if active is not None:
            g = g * active
        return (g @ wv.T if rx else None, xv.T @ g if rw else None,
                _unbroadcast(g, bv.shape) if rb else None)

    return _make(out, (x, w, b), "linear", back)


def softplus(x) -> Node:
    x = _as_node(x)
    v = x.value
    out = np.logaddexp(0.0, v)
    return _make(out, (x,), "softplus", lambda g: (g * _sigmoid(v),))


def square(x) -> Node:
    x = _as_node(x)
    v = x.value
    return _make(v * v, (x,), "square", lambda g: (2.0 * g * v,))


def sqrt(x) -> Node:
    x = _as_node(x)
    out = np.sqrt(x.value)
    return _make(out, (x,), "sqrt", lambda g: (0.5 * g / out,))


def clamp(x, lo: float | None = None, hi: float | None = None) -> Node:
    """Clip to ``[lo, hi]``; the gradient is 1 strictly inside, 0 on or outside the bounds."""
    x = _as_node(x)
    v = x.value
    inside = np.ones(v.shape, dtype=bool)
    if lo is not None:
        inside &= v > lo
    if hi is not None:
        inside &= v < hi
    return _make(np.clip(v, lo, hi), (x,), "clamp", lambda g: (g * inside,))


def indicator_ge(x, threshold: float = 0.5) -> Node:
    """Inclusive step function, zero gradient everywhere."""
    x = _as_node(x)
    return Node((x.value >= threshold).astype(np.float64), (x,), "indicator")


def stop_gradient(x) -> Node:
    x = _as_node(x)
    return Node(x.value, (x,), "stop_gradient")


def cast(x, dtype) -> Node:
    """Change precision; the gradient is cast back to the input's dtype."""
    x = _as_node(x)
    src = x.value.dtype
    if src == np.dtype(dtype):
        return x
    return _make(x.value.astype(dtype), (x,), "cast", lambda g: (g.astype(src),))


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def transpose(x) -> Node:
    x = _as_node(x)
    return _make(x.value.T, (x,), "transpose", lambda g: (g.T,))


def reshape(x, shape) -> Node:
    x = _as_node(x)
    old = x.value.shape
    try:
        out = x.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return _make(out, (x,), "reshape", lambda g: (g.reshape(old),))


def getitem(x, key) -> Node:
    x = _as_node(x)
    v = x.value

    def back(g):
        full = np.zeros_like(v)
        np.add.at(full, key, g)
        return (full,)

    return _make(v[key], (x,), "getitem", back)


def take(x, indices, axis: int = 0) -> Node:
    """Gather along ``axis``; repeated indices accumulate gradient."""
    x = _as_node(x)
    indices = np.asarray(indices, dtype=np.intp)
    v = x.value

    def back(g):
        full = np.zeros_like(v)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _make(np.take(v, indices, axis=axis), (x,), "take", back)


def concat(nodes: Sequence, axis: int = -1) -> Node:
    nodes = [_as_node(n) for n in nodes]
    values = [n.value for n in nodes]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError:
        raise ShapeError("concat", *[v.shape for v in values]) from None
    splits = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _make(out, tuple(nodes), "concat",
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def sum(x, axis=None, keepdims: bool = False) -> Node:  # noqa: A001 - mirrors numpy
    x = _as_node(x)
    shape = x.value.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(np.sum(x.value, axis=axis, keepdims=keepdims), (x,), "sum", back)


def mean(x, axis=None, keepdims: bool = False) -> Node:
    x = _as_node(x)
    shape = x.value.shape
    count = x.value.size if axis is None else np.prod([shape[a] for a in np.atleast_1d(axis)])

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape),)

    return _make(np.mean(x.value, axis=axis, keepdims=keepdims), (x,), "mean", back)


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------

def gaussian_log_density(x, mu, log_std) -> Node:
    """Elementwise log N(x; mu, exp(log_std)^2)."""
    x, mu, log_std = _as_node(x), _as_node(mu), _as_node(log_std)
    _broadcast_check("gaussian_log_density", x.value, mu.value)
    _broadcast_check("gaussian_log_density", mu.value, log_std.value)
    inv_std = np.exp(-log_std.value)
    z = (x.value - mu.value) * inv_std
    out = -0.5 * z * z - log_std.value - 0.5 * _LOG_2PI

    def back(g):
        gx = -g * z * inv_std
        return (_unbroadcast(gx, x.value.shape),
                _unbroadcast(-gx, mu.value.shape),
                _unbroadcast(g * (z * z - 1.0), log_std.value.shape))

    return _make(out, (x, mu, log_std), "gaussian_log_density", back)


def reparameterized_sample(mu, std, eps) -> Node:
    """``mu + std * eps`` with ``eps`` treated as fixed noise."""
    mu, std = _as_node(mu), _as_node(std)
    eps = np.asarray(eps.value if isinstance(eps, Node) else eps, dtype=np.float64)
    _broadcast_check("sample", mu.value, std.value)
    sm, ss = mu.value.shape, std.value.shape
    return _make(mu.value + std.value * eps, (mu, std), "sample",
                 lambda g: (_unbroadcast(g, sm), _unbroadcast(g * eps, ss)))


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(tape: Tape, output: Node, wrt: Sequence[Node] | None = None):
    """Propagate d(output)/d(.) to every node reachable on ``tape``.

    Leaf gradients overwrite ``leaf.grad``; unreached leaves listed in ``wrt``
    get zeros.  Returns the gradients of ``wrt`` when given.
    """
    if output.value.size != 1:
        raise ShapeError("backward (output must be scalar)", output.value.shape)
    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.value)}
    leaves: dict[int, Node] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        parent_grads = node._backward(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent._backward is None:
                leaves[key] = parent
            prev = grads.get(key)
            grads[key] = pg if prev is None else prev + pg
    for key, node in leaves.items():
        node.grad = np.array(np.broadcast_to(grads[key], node.value.shape))
    if output._backward is None and output.requires_grad:
        output.grad = np.ones_like(output.value)
    if wrt is None:
        return None
    out = []
    for node in wrt:
        if id(node) in leaves or node is output:
            out.append(node.grad)
        else:
            out.append(np.zeros_like(node.value))
    return out


def grad_check(fn: Callable[..., Node], point, h: float = 1e-5, coords: Iterable[tuple] | None = None) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` maps one node per entry of ``point`` to a scalar node.  ``coords``
    optionally restricts the check to ``(input index, flat index)`` pairs.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    single = isinstance(point, np.ndarray) or np.isscalar(point)
    arrays = [np.array(point, dtype=np.float64)] if single else [np.array(p, dtype=np.float64) for p in point]
    leaves = [leaf(a) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
    analytic = tape.backward(out, leaves)
    if coords is None:
        coords = [(i, j) for i, a in enumerate(arrays) for j in range(a.size)]
    worst = 0.0
    for i, j in coords:
        a_flat = analytic[i].reshape(-1)
        if not np.isfinite(a_flat[j]):
            raise NonFiniteError(f"analytic gradient not finite at input {i}, index {j}", (i, j))
        base = arrays[i].reshape(-1)
        orig = base[j]
        base[j] = orig + h
        f_plus = float(fn(*[constant(a) for a in arrays]).value)
        base[j] = orig - h
        f_minus = float(fn(*[constant(a) for a in arrays]).value)
        base[j] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteError(f"function not finite near input {i}, index {j}", (i, j))
        numeric = (f_plus - f_minus) / (2.0 * h)
        err = abs(a_flat[j] - numeric) / (abs(numeric) + 1e-8)
        worst = max(worst, err)
    return worst
