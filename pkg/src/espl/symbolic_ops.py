"""Numerically regularized symbolic operators and their hinge penalties.

Every operator returns ``(output, penalty)``.  The penalty is zero exactly when
the input stays out of the operator's forbidden region, so the training loss
can push inputs back without changing the forward value elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad


class OperatorKind(str, Enum):
    MUL = "mul"
    DIV = "div"
    SIN = "sin"
    COS = "cos"
    EXP = "exp"
    LOG = "log"
    IDENT = "ident"
    COND = "cond"

    @property
    def arity(self) -> int:
        return _ARITY[self]

    @classmethod
    def parse(cls, tag: str) -> "OperatorKind":
        try:
            return cls(tag.lower())
        except ValueError:
            raise ValueError(f"unknown operator tag {tag!r}") from None


_ARITY = {
    OperatorKind.MUL: 2,
    OperatorKind.DIV: 2,
    OperatorKind.SIN: 1,
    OperatorKind.COS: 1,
    OperatorKind.EXP: 1,
    OperatorKind.LOG: 1,
    OperatorKind.IDENT: 1,
    OperatorKind.COND: 3,
}


@dataclass(frozen=True)
class OperatorBounds:
    mul_clamp: float = 100.0
    div_bound: float = 0.01
    exp_hi: float = 4.0
    exp_lo: float = -10.0
    log_bound: float = 0.001


BOUNDS = OperatorBounds()


def apply(kind: OperatorKind | str, *inputs, bounds: OperatorBounds = BOUNDS):
    """Apply a regularized operator to autodiff nodes or arrays.

    Returns ``(output, penalty)`` nodes with the same (broadcast) shape.
    """
    kind = OperatorKind.parse(kind) if isinstance(kind, str) else kind
    if len(inputs) != kind.arity:
        raise ValueError(f"{kind.value} takes {kind.arity} inputs, got {len(inputs)}")
    xs = [ad._as_node(x) for x in inputs]

    if kind is OperatorKind.MUL:
        return _mul(*xs, bounds.mul_clamp)
    if kind is OperatorKind.DIV:
        return _div(*xs, bounds.div_bound)
    if kind is OperatorKind.EXP:
        return _exp(xs[0], bounds.exp_lo, bounds.exp_hi)
    if kind is OperatorKind.LOG:
        return _log(xs[0], bounds.log_bound)
    if kind is OperatorKind.SIN:
        (x,) = xs
        return ad.sin(x), _zeros_like(x)
    if kind is OperatorKind.COS:
        (x,) = xs
        return ad.cos(x), _zeros_like(x)
    if kind is OperatorKind.IDENT:
        (x,) = xs
        return x, _zeros_like(x)
    x1, x2, x3 = xs
    gate = ad.sigmoid(x1)
    out = gate * x2 + (1.0 - gate) * x3
    return out, ad.constant(np.zeros(np.broadcast_shapes(x1.shape, x2.shape, x3.shape)))


# Each regularized operator is one output node and one penalty node with a
# hand-written backward.  Clamp gradients are 1 strictly inside the bounds and
# hinge gradients vanish at the hinge, matching the autodiff primitives.

def _hinge_grad(v, lo=None, hi=None):
    g = np.zeros(v.shape)
    if hi is not None:
        g += v > hi
    if lo is not None:
        g -= v < lo
    return g


def _mul(a: ad.Node, b: ad.Node, c: float):
    av, bv = a.value, b.value
    ac, bc = np.clip(av, -c, c), np.clip(bv, -c, c)
    a_in, b_in = np.abs(av) < c, np.abs(bv) < c
    out = ad._make(ac * bc, (a, b), "rmul",
                   lambda g: (ad._unbroadcast(g * bc * a_in, av.shape), ad._unbroadcast(g * ac * b_in, bv.shape)))
    pen_v = np.maximum(av - c, 0.0) + np.maximum(-c - av, 0.0) + np.maximum(bv - c, 0.0) + np.maximum(-c - bv, 0.0)
    ga, gb = _hinge_grad(av, -c, c), _hinge_grad(bv, -c, c)
    pen = ad._make(pen_v, (a, b), "rmul_pen",
                   lambda g: (ad._unbroadcast(g * ga, av.shape), ad._unbroadcast(g * gb, bv.shape)))
    return out, pen


def _div(a: ad.Node, b: ad.Node, bound: float):
    av, bv = a.value, b.value
    branch = bv >= bound
    safe = np.where(branch, bv, 1.0)
    ratio = np.where(branch, av / safe, 0.0)
    out = ad._make(ratio, (a, b), "rdiv",
                   lambda g: (ad._unbroadcast(g * branch / safe, av.shape),
                              ad._unbroadcast(-g * ratio / safe, bv.shape)))
    below = bv < bound
    pen = ad._make(np.maximum(bound - bv, 0.0), (b,), "rdiv_pen", lambda g: (-g * below,))
    return out, pen


def _exp(x: ad.Node, lo: float, hi: float):
    v = x.value
    out_v = np.exp(np.clip(v, lo, hi))
    inside = (v > lo) & (v < hi)
    out = ad._make(out_v, (x,), "rexp", lambda g: (g * out_v * inside,))
    gp = _hinge_grad(v, lo, hi)
    pen = ad._make(np.maximum(v - hi, 0.0) + np.maximum(lo - v, 0.0), (x,), "rexp_pen", lambda g: (g * gp,))
    return out, pen


def _log(x: ad.Node, bound: float):
    v = x.value
    keep = v >= bound
    safe = np.where(keep, v, bound)
    out = ad._make(np.log(safe), (x,), "rlog", lambda g: (g * keep / safe,))
    below = v < bound
    pen = ad._make(np.maximum(bound - v, 0.0), (x,), "rlog_pen", lambda g: (-g * below,))
    return out, pen


def _zeros_like(x: ad.Node) -> ad.Node:
    return ad.constant(np.zeros(x.value.shape))


def apply_values(kind: OperatorKind | str, *inputs, bounds: OperatorBounds = BOUNDS):
    """Plain-float version of :func:`apply` written straight from the piecewise rules."""
    kind = OperatorKind.parse(kind) if isinstance(kind, str) else kind
    xs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if kind is OperatorKind.MUL:
        c = bounds.mul_clamp
        x1, x2 = xs
        out = np.minimum(np.maximum(x1, -c), c) * np.minimum(np.maximum(x2, -c), c)
        pen = (np.maximum(x1 - c, 0.0) + np.maximum(-c - x1, 0.0)
               + np.maximum(x2 - c, 0.0) + np.maximum(-c - x2, 0.0))
        return out, pen
    if kind is OperatorKind.DIV:
        x1, x2 = xs
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x2 >= bounds.div_bound, x1 / np.where(x2 >= bounds.div_bound, x2, 1.0), 0.0)
        return out, np.maximum(bounds.div_bound - x2, 0.0)
    if kind is OperatorKind.EXP:
        (x,) = xs
        out = np.exp(np.minimum(np.maximum(x, bounds.exp_lo), bounds.exp_hi))
        return out, np.maximum(x - bounds.exp_hi, 0.0) + np.maximum(bounds.exp_lo - x, 0.0)
    if kind is OperatorKind.LOG:
        (x,) = xs
        return np.log(np.maximum(x, bounds.log_bound)), np.maximum(bounds.log_bound - x, 0.0)
    if kind is OperatorKind.SIN:
        return np.sin(xs[0]), np.zeros_like(xs[0])
    if kind is OperatorKind.COS:
        return np.cos(xs[0]), np.zeros_like(xs[0])
    if kind is OperatorKind.IDENT:
        return xs[0], np.zeros_like(xs[0])
    x1, x2, x3 = xs
    gate = 0.5 * (np.tanh(0.5 * x1) + 1.0)
    return gate * x2 + (1.0 - gate) * x3, np.zeros(np.broadcast_shapes(x1.shape, x2.shape, x3.shape))


def unregularized(kind: OperatorKind | str, *inputs):
    """The textbook operator, used to check where regularization is inactive."""
    kind = OperatorKind.parse(kind) if isinstance(kind, str) else kind
    xs = [np.asarray(x, dtype=np.float64) for x in inputs]
    with np.errstate(all="ignore"):
        return {
            OperatorKind.MUL: lambda: xs[0] * xs[1],
            OperatorKind.DIV: lambda: xs[0] / xs[1],
            OperatorKind.SIN: lambda: np.sin(xs[0]),
            OperatorKind.COS: lambda: np.cos(xs[0]),
            OperatorKind.EXP: lambda: np.exp(xs[0]),
            OperatorKind.LOG: lambda: np.log(xs[0]),
            OperatorKind.IDENT: lambda: xs[0],
            OperatorKind.COND: lambda: (1.0 / (1.0 + np.exp(-xs[0]))) * xs[1]
            + (1.0 - 1.0 / (1.0 + np.exp(-xs[0]))) * xs[2],
        }[kind]()
