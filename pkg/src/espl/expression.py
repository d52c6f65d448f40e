"""Closed-form policies: extraction from masked networks, simplification, metrics, I/O.

An expression is a small immutable tree of :class:`Const`, :class:`Var`,
:class:`Unary`, :class:`Binary`, :class:`Ternary` and :class:`Affine` nodes.
Operator nodes carry a ``regularized`` flag; regularized nodes evaluate with
the clamped/piecewise semantics the network was trained with, while plain
nodes use the textbook operator.  :func:`verify_and_strip` turns the former
into the latter when the clamp can never trigger on an environment's state box.
"""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .symbolic_ops import BOUNDS, OperatorKind, apply_values, unregularized


# ---------------------------------------------------------------------------
# tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Const:
    value: float


@dataclass(frozen=True, eq=False)
class Var:
    index: int


@dataclass(frozen=True, eq=False)
class Unary:
    op: OperatorKind
    child: "Expr"
    regularized: bool = True


@dataclass(frozen=True, eq=False)
class Binary:
    op: OperatorKind
    left: "Expr"
    right: "Expr"
    regularized: bool = True


@dataclass(frozen=True, eq=False)
class Ternary:
    op: OperatorKind
    a: "Expr"
    b: "Expr"
    c: "Expr"


@dataclass(frozen=True, eq=False)
class Affine:
    terms: tuple  # ((coefficient, Expr), ...)
    bias: float = 0.0


Expr = Union[Const, Var, Unary, Binary, Ternary, Affine]

_REGULARIZABLE = {OperatorKind.MUL, OperatorKind.DIV, OperatorKind.EXP, OperatorKind.LOG}


def key(expr: Expr):
    """Hashable structural identity, used to merge like terms."""
    if isinstance(expr, Const):
        return ("c", expr.value)
    if isinstance(expr, Var):
        return ("v", expr.index)
    if isinstance(expr, Unary):
        return ("u", expr.op.value, expr.regularized, key(expr.child))
    if isinstance(expr, Binary):
        return ("b", expr.op.value, expr.regularized, key(expr.left), key(expr.right))
    if isinstance(expr, Ternary):
        return ("t", expr.op.value, key(expr.a), key(expr.b), key(expr.c))
    return ("a", expr.bias, tuple((c, key(e)) for c, e in expr.terms))


def children(expr: Expr) -> tuple:
    if isinstance(expr, Unary):
        return (expr.child,)
    if isinstance(expr, Binary):
        return (expr.left, expr.right)
    if isinstance(expr, Ternary):
        return (expr.a, expr.b, expr.c)
    if isinstance(expr, Affine):
        return tuple(e for _, e in expr.terms)
    return ()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _apply(op: OperatorKind, regularized: bool, *args):
    if regularized and op in _REGULARIZABLE:
        return apply_values(op, *args)[0]
    return unregularized(op, *args)


def evaluate(expr: Expr, states) -> np.ndarray:
    """Evaluate on ``(d,)`` (returns a float) or ``(B, d)`` states."""
    states = np.asarray(states, dtype=np.float64)
    single = states.ndim == 1
    batch = states.reshape(1, -1) if single else states
    out = _evaluate(expr, batch, {})
    out = np.broadcast_to(out, (batch.shape[0],)).astype(np.float64)
    return float(out[0]) if single else out


def _evaluate(expr: Expr, states: np.ndarray, memo: dict):
    # entries hold the node itself so its id cannot be recycled while cached
    hit = memo.get(id(expr))
    if hit is not None and hit[0] is expr:
        return hit[1]
    if isinstance(expr, Const):
        val = np.full(states.shape[0], expr.value)
    elif isinstance(expr, Var):
        val = states[:, expr.index]
    elif isinstance(expr, Unary):
        val = _apply(expr.op, expr.regularized, _evaluate(expr.child, states, memo))
    elif isinstance(expr, Binary):
        val = _apply(expr.op, expr.regularized, _evaluate(expr.left, states, memo),
                     _evaluate(expr.right, states, memo))
    elif isinstance(expr, Ternary):
        val = _apply(expr.op, False, *[_evaluate(e, states, memo) for e in children(expr)])
    else:
        val = np.zeros(states.shape[0])
        for coef, child in expr.terms:
            val = val + coef * _evaluate(child, states, memo)
        val = val + expr.bias
    memo[id(expr)] = (expr, val)
    return val


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

def _affine_row(row: np.ndarray, bias: float, inputs: Sequence[Expr]) -> Expr:
    terms = tuple((float(c), e) for c, e in zip(row, inputs) if c != 0.0)
    return Affine(terms, float(bias))


def _operator_node(kind: OperatorKind, args: Sequence[Expr]) -> Expr:
    if kind is OperatorKind.IDENT:
        return args[0]
    if kind.arity == 1:
        return Unary(kind, args[0], regularized=kind in _REGULARIZABLE)
    if kind.arity == 2:
        return Binary(kind, args[0], args[1], regularized=True)
    return Ternary(kind, *args)


def extract(network, mask=None, weights=None, biases=None) -> Expr:
    """Symbolic forward substitution through ``network`` with weights ``w * mask``.

    ``mask`` defaults to thresholding nothing (all ones).  Zero effective
    weights are dropped, so pruned paths vanish from the tree.
    """
    cfg = network.config
    weights = [np.asarray(getattr(w, "value", w), dtype=np.float64) for w in (weights or network.weights)]
    biases = [np.asarray(getattr(b, "value", b), dtype=np.float64) for b in (biases or network.biases)]
    if mask is not None:
        weights = [w * m for w, m in zip(weights, network.split_mask(np.asarray(mask, dtype=np.float64)))]
    state_vars = [Var(i) for i in range(cfg.state_dim)]
    features: list[Expr] = list(state_vars)
    x: list[Expr] = list(state_vars)
    for layout, w, b in zip(cfg.layers, weights[:-1], biases[:-1]):
        inp = features if cfg.dense else x
        ys = [_affine_row(w[j], b[j], inp) for j in range(layout.linear_width)]
        outs: list = [None] * layout.output_width
        for kind, cols, out in layout.slots():
            outs[out] = _operator_node(kind, [ys[c] for c in cols])
        features = features + outs
        x = outs
    return _affine_row(weights[-1][0], biases[-1][0], features if cfg.dense else x)


def extract_policy(networks, mask=None, weights=None, biases=None) -> list[Expr]:
    """One tree per action dimension; ``mask`` is the concatenated flat mask."""
    trees, start = [], 0
    for i, net in enumerate(networks):
        m = None
        if mask is not None:
            m = np.asarray(mask)[start:start + net.n_weights]
            start += net.n_weights
        trees.append(extract(net, m,
                             None if weights is None else weights[i],
                             None if biases is None else biases[i]))
    return trees


# ---------------------------------------------------------------------------
# simplification
# ---------------------------------------------------------------------------

def _scale(expr: Expr, c: float) -> Expr:
    return Affine(((c, expr),), 0.0)


def simplify(expr: Expr) -> Expr:
    """Constant folding, identity elimination and affine merging.

    Evaluation is preserved up to floating-point reassociation.
    """
    return _simplify(expr, {})


def _simplify(expr: Expr, memo: dict) -> Expr:
    hit = memo.get(id(expr))
    if hit is not None and hit[0] is expr:
        return hit[1]
    out = _simplify_node(expr, memo)
    memo[id(expr)] = (expr, out)
    return out


def _simplify_node(expr: Expr, memo: dict) -> Expr:
    if isinstance(expr, (Const, Var)):
        return expr
    if isinstance(expr, Unary):
        child = _simplify(expr.child, memo)
        if expr.op is OperatorKind.IDENT:
            return child
        if isinstance(child, Const):
            return Const(float(_apply(expr.op, expr.regularized, child.value)))
        return Unary(expr.op, child, expr.regularized)
    if isinstance(expr, Ternary):
        args = [_simplify(e, memo) for e in children(expr)]
        if all(isinstance(a, Const) for a in args):
            return Const(float(_apply(expr.op, False, *[a.value for a in args])))
        return Ternary(expr.op, *args)
    if isinstance(expr, Binary):
        return _simplify_binary(expr, _simplify(expr.left, memo), _simplify(expr.right, memo), memo)
    return _simplify_affine(expr, memo)


def _simplify_binary(expr: Binary, left: Expr, right: Expr, memo: dict) -> Expr:
    op, reg = expr.op, expr.regularized
    lc, rc = isinstance(left, Const), isinstance(right, Const)
    if lc and rc:
        return Const(float(_apply(op, reg, left.value, right.value)))
    if op is OperatorKind.MUL:
        if (lc and left.value == 0.0) or (rc and right.value == 0.0):
            return Const(0.0)
        if not reg and (lc or rc):
            c, other = (left.value, right) if lc else (right.value, left)
            return _simplify(_scale(other, c), memo)
    elif op is OperatorKind.DIV:
        if lc and left.value == 0.0:
            return Const(0.0)
        if rc:
            if reg and right.value < BOUNDS.div_bound:
                return Const(0.0)
            return _simplify(_scale(left, 1.0 / right.value), memo)
    return Binary(op, left, right, reg)


def _simplify_affine(expr: Affine, memo: dict) -> Expr:
    bias = expr.bias
    merged: dict = {}
    order: list = []

    def push(coef, e):
        k = key(e)
        if k in merged:
            merged[k][0] += coef
        else:
            merged[k] = [coef, e]
            order.append(k)

    for coef, child in expr.terms:
        child = _simplify(child, memo)
        if isinstance(child, Const):
            bias += coef * child.value
        elif isinstance(child, Affine):
            for c2, e2 in child.terms:
                push(coef * c2, e2)
            bias += coef * child.bias
        else:
            push(coef, child)
    terms = tuple((merged[k][0], merged[k][1]) for k in order if merged[k][0] != 0.0)
    if not terms:
        return Const(float(bias))
    if len(terms) == 1 and terms[0][0] == 1.0 and bias == 0.0:
        return terms[0][1]
    return Affine(terms, float(bias))


# ---------------------------------------------------------------------------
# box verification
# ---------------------------------------------------------------------------

def _clamp_inactive(op: OperatorKind, ranges: list[tuple[float, float]], margin: float) -> bool:
    b = BOUNDS
    if op is OperatorKind.EXP:
        lo, hi = ranges[0]
        return hi <= b.exp_hi - margin * abs(b.exp_hi) and lo >= b.exp_lo + margin * abs(b.exp_lo)
    if op is OperatorKind.LOG:
        return ranges[0][0] >= b.log_bound * (1.0 + margin)
    if op is OperatorKind.DIV:
        return ranges[1][0] >= b.div_bound * (1.0 + margin)
    if op is OperatorKind.MUL:
        cap = b.mul_clamp * (1.0 - margin)
        return all(max(abs(lo), abs(hi)) <= cap for lo, hi in ranges)
    return True


def verify_and_strip(expr: Expr, low, high, samples: int = 10000, rng=None,
                     margin: float = 0.1) -> tuple[Expr, list[str]]:
    """Replace regularized operators by plain ones where their clamp never fires on the box.

    Operator inputs are sampled on ``samples`` uniform states in ``[low, high]``.
    Returns the rewritten tree and one note per regularized operator examined.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    low, high = np.asarray(low, dtype=np.float64), np.asarray(high, dtype=np.float64)
    states = rng.uniform(low, high, size=(samples, low.size))
    values: dict = {}
    notes: list[str] = []
    rebuilt: dict = {}

    def visit(e: Expr) -> Expr:
        if id(e) in rebuilt:
            return rebuilt[id(e)]
        kids = [visit(c) for c in children(e)]
        if isinstance(e, (Unary, Binary)) and e.regularized and e.op in _REGULARIZABLE:
            ins = [_evaluate(c, states, values) for c in children(e)]
            ranges = [(float(np.min(v)), float(np.max(v))) for v in ins]
            span = ", ".join(f"[{lo:.4g}, {hi:.4g}]" for lo, hi in ranges)
            if _clamp_inactive(e.op, ranges, margin):
                notes.append(f"{e.op.value}: inputs {span} stay clear of the bounds on the state box; plain operator used")
                reg = False
            else:
                notes.append(f"{e.op.value}: inputs {span} reach a bound on the state box; regularized form kept")
                reg = True
        else:
            reg = getattr(e, "regularized", None)
        if isinstance(e, Unary):
            out = Unary(e.op, kids[0], reg)
        elif isinstance(e, Binary):
            out = Binary(e.op, kids[0], kids[1], reg)
        elif isinstance(e, Ternary):
            out = Ternary(e.op, *kids)
        elif isinstance(e, Affine):
            out = Affine(tuple((c, k) for (c, _), k in zip(e.terms, kids)), e.bias)
        else:
            out = e
        rebuilt[id(e)] = out
        return out

    return visit(expr), notes


# ---------------------------------------------------------------------------
# display rounding and metrics
# ---------------------------------------------------------------------------

def round_constants(expr: Expr, decimals: int = 2) -> Expr:
    """The tree as displayed: constants rounded, terms that round to zero dropped."""
    def r(v):
        out = round(float(v), decimals)
        return 0.0 if out == 0.0 else out

    def visit(e):
        if isinstance(e, Const):
            return Const(r(e.value))
        if isinstance(e, Var):
            return e
        if isinstance(e, Unary):
            return Unary(e.op, visit(e.child), e.regularized)
        if isinstance(e, Binary):
            return Binary(e.op, visit(e.left), visit(e.right), e.regularized)
        if isinstance(e, Ternary):
            return Ternary(e.op, *[visit(c) for c in children(e)])
        terms = tuple((r(c), visit(ch)) for c, ch in e.terms if r(c) != 0.0)
        return Affine(terms, r(e.bias))

    return simplify(visit(simplify(expr)))


def count_terms(expr: Expr) -> tuple[int, int, int]:
    """``(operators, constants, variables)`` under the documented convention.

    Coefficient-times-variable is one variable term; a standalone additive
    constant is one constant term; every operator application and every
    addition joining two terms counts as an operator; coefficient
    multiplications are not counted.
    """
    if isinstance(expr, Const):
        return (0, 1, 0)
    if isinstance(expr, Var):
        return (0, 0, 1)
    if isinstance(expr, Affine):
        n_o = n_c = n_v = 0
        for _, child in expr.terms:
            o, c, v = count_terms(child)
            n_o, n_c, n_v = n_o + o, n_c + c, n_v + v
        n_items = len(expr.terms)
        if expr.bias != 0.0:
            n_c += 1
            n_items += 1
        return (n_o + max(n_items - 1, 0), n_c, n_v)
    n_o, n_c, n_v = 1, 0, 0
    for child in children(expr):
        o, c, v = count_terms(child)
        n_o, n_c, n_v = n_o + o, n_c + c, n_v + v
    return (n_o, n_c, n_v)


@dataclass
class PolicyReport:
    trees: list
    length: float
    counts: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    assumptions: list = field(default_factory=list)

    @property
    def infix(self) -> list[str]:
        return [to_infix(t) for t in self.trees]

    def to_dict(self) -> dict:
        return {
            "format": "espl-policy/1",
            "action_dims": len(self.trees),
            "expressions": [to_ast(t) for t in self.trees],
            "infix": self.infix,
            "metrics": {
                "length": self.length,
                "per_dim": [dict(zip(("operators", "constants", "variables"), c)) for c in self.counts],
            },
            "provenance": self.provenance,
            "assumptions": self.assumptions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyReport":
        trees = [from_ast(a) for a in d["expressions"]]
        rep = metrics(trees, provenance=d.get("provenance", {}))
        rep.assumptions = list(d.get("assumptions", []))
        return rep


def metrics(trees: Sequence[Expr], provenance: dict | None = None, decimals: int = 2) -> PolicyReport:
    """Length = mean over action dimensions of operators + constants + variables.

    Counting runs on the displayed (rounded) form of each tree.
    """
    counts = [count_terms(round_constants(t, decimals)) for t in trees]
    length = float(np.mean([sum(c) for c in counts]))
    return PolicyReport(list(trees), length, counts, dict(provenance or {}))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_ADD, _MUL, _ATOM = 1, 2, 3


def _num(v: float) -> str:
    text = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def to_infix(expr: Expr) -> str:
    """Human-readable form, constants at two decimals, state variables 1-indexed."""
    shown = round_constants(expr)
    if isinstance(shown, Const):
        return f"{shown.value:.2f}"
    return _infix(shown)[0]


def _wrap(text_prec, min_prec):
    text, prec = text_prec
    return f"({text})" if prec < min_prec else text


def _infix(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        return (_num(e.value), _ATOM if e.value >= 0 else _ADD)
    if isinstance(e, Var):
        return (f"s{e.index + 1}", _ATOM)
    if isinstance(e, Unary):
        name = ("r" if e.regularized and e.op in _REGULARIZABLE else "") + e.op.value
        return (f"{name}({_infix(e.child)[0]})", _ATOM)
    if isinstance(e, Ternary):
        return (f"{e.op.value}({', '.join(_infix(c)[0] for c in children(e))})", _ATOM)
    if isinstance(e, Binary):
        if e.regularized:
            return (f"r{e.op.value}({_infix(e.left)[0]}, {_infix(e.right)[0]})", _ATOM)
        sym = "*" if e.op is OperatorKind.MUL else "/"
        right_prec = _MUL if e.op is OperatorKind.MUL else _ATOM
        return (f"{_wrap(_infix(e.left), _MUL)}{sym}{_wrap(_infix(e.right), right_prec)}", _MUL)
    parts = []
    for coef, child in e.terms:
        body = _infix(child)
        mag = abs(coef)
        text = _wrap(body, _MUL) if mag == 1.0 else f"{_num(mag)}*{_wrap(body, _ATOM if body[1] == _MUL else _MUL)}"
        parts.append(("-" if coef < 0 else "+", text))
    if e.bias != 0.0:
        parts.append(("-" if e.bias < 0 else "+", _num(abs(e.bias))))
    sign, first = parts[0]
    text = ("-" if sign == "-" else "") + first
    for sign, part in parts[1:]:
        text += f" {sign} {part}"
    if len(parts) == 1 and parts[0][0] == "+" and e.terms:
        return (text, _MUL)
    return (text, _ADD)


def to_ast(expr: Expr) -> dict:
    if isinstance(expr, Const):
        return {"type": "const", "value": expr.value}
    if isinstance(expr, Var):
        return {"type": "var", "index": expr.index}
    if isinstance(expr, Unary):
        return {"type": "unary", "op": expr.op.value, "regularized": expr.regularized, "child": to_ast(expr.child)}
    if isinstance(expr, Binary):
        return {"type": "binary", "op": expr.op.value, "regularized": expr.regularized,
                "left": to_ast(expr.left), "right": to_ast(expr.right)}
    if isinstance(expr, Ternary):
        return {"type": "ternary", "op": expr.op.value, "args": [to_ast(c) for c in children(expr)]}
    return {"type": "affine", "bias": expr.bias, "terms": [[c, to_ast(e)] for c, e in expr.terms]}


def from_ast(d: dict) -> Expr:
    kind = d["type"]
    if kind == "const":
        return Const(float(d["value"]))
    if kind == "var":
        return Var(int(d["index"]))
    if kind == "unary":
        return Unary(OperatorKind.parse(d["op"]), from_ast(d["child"]), bool(d.get("regularized", False)))
    if kind == "binary":
        return Binary(OperatorKind.parse(d["op"]), from_ast(d["left"]), from_ast(d["right"]),
                      bool(d.get("regularized", False)))
    if kind == "ternary":
        return Ternary(OperatorKind.parse(d["op"]), *[from_ast(a) for a in d["args"]])
    if kind == "affine":
        return Affine(tuple((float(c), from_ast(e)) for c, e in d["terms"]), float(d["bias"]))
    raise ValueError(f"unknown expression node type {kind!r}")


def serialize(trees: Sequence[Expr], fmt: str = "infix") -> str:
    if fmt == "infix":
        return "\n".join(to_infix(t) for t in trees)
    if fmt in ("ast", "structured-ast", "json"):
        return json.dumps([to_ast(t) for t in trees])
    raise ValueError(f"unknown format {fmt!r}")


def parse(text: str, fmt: str = "ast") -> list[Expr]:
    """Inverse of :func:`serialize`; infix input yields one tree per non-empty line."""
    if fmt in ("ast", "structured-ast", "json"):
        data = json.loads(text)
        return [from_ast(d) for d in data]
    if fmt == "infix":
        return [parse_infix(line) for line in text.splitlines() if line.strip()]
    raise ValueError(f"unknown format {fmt!r}")


_FUNCS = {
    "sin": (OperatorKind.SIN, False), "cos": (OperatorKind.COS, False),
    "exp": (OperatorKind.EXP, False), "log": (OperatorKind.LOG, False),
    "rexp": (OperatorKind.EXP, True), "rlog": (OperatorKind.LOG, True),
    "rmul": (OperatorKind.MUL, True), "rdiv": (OperatorKind.DIV, True),
    "cond": (OperatorKind.COND, False),
}


def parse_infix(text: str) -> Expr:
    """Parse an infix expression over ``s1..sn`` (e.g. ``17.17*s3 + 1.2*s4``)."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse expression {text!r}: {exc.msg}") from None
    return simplify(_from_pyast(tree.body, text))


def _from_pyast(node, text) -> Expr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return Const(float(node.value))
    if isinstance(node, ast.Name):
        name = node.id
        if name.startswith("s") and name[1:].isdigit() and int(name[1:]) >= 1:
            return Var(int(name[1:]) - 1)
        raise ValueError(f"unknown symbol {name!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _from_pyast(node.operand, text)
        return Affine(((-1.0 if isinstance(node.op, ast.USub) else 1.0, inner),), 0.0)
    if isinstance(node, ast.BinOp):
        left, right = _from_pyast(node.left, text), _from_pyast(node.right, text)
        if isinstance(node.op, ast.Add):
            return Affine(((1.0, left), (1.0, right)), 0.0)
        if isinstance(node.op, ast.Sub):
            return Affine(((1.0, left), (-1.0, right)), 0.0)
        if isinstance(node.op, ast.Mult):
            return Binary(OperatorKind.MUL, left, right, False)
        if isinstance(node.op, ast.Div):
            return Binary(OperatorKind.DIV, left, right, False)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        kind, reg = _FUNCS[node.func.id]
        args = [_from_pyast(a, text) for a in node.args]
        if len(args) != kind.arity:
            raise ValueError(f"{node.func.id} takes {kind.arity} arguments in {text!r}")
        if kind.arity == 1:
            return Unary(kind, args[0], reg)
        if kind.arity == 2:
            return Binary(kind, args[0], args[1], reg)
        return Ternary(kind, *args)
    raise ValueError(f"unsupported syntax in {text!r}")


# ---------------------------------------------------------------------------
# helpers for analysis
# ---------------------------------------------------------------------------

def affine_coefficients(expr: Expr, state_dim: int) -> tuple[np.ndarray, float]:
    """Gains and offset of an expression that is affine in the raw state.

    Raises ``ValueError`` for anything nonlinear.
    """
    e = simplify(expr)
    gains = np.zeros(state_dim)
    if isinstance(e, Const):
        return gains, e.value
    if isinstance(e, Var):
        gains[e.index] = 1.0
        return gains, 0.0
    if isinstance(e, Affine) and all(isinstance(c, Var) for _, c in e.terms):
        for coef, v in e.terms:
            gains[v.index] += coef
        return gains, e.bias
    raise ValueError("expression is not affine in the state")


def local_gains(expr: Expr, state_dim: int, h: float = 1e-6) -> tuple[np.ndarray, float]:
    """Central-difference gains at the origin; works for any tree."""
    origin = np.zeros(state_dim)
    probes = np.vstack([origin + h * np.eye(state_dim), origin - h * np.eye(state_dim), origin])
    vals = evaluate(expr, probes)
    gains = (vals[:state_dim] - vals[state_dim:2 * state_dim]) / (2 * h)
    return gains, float(vals[-1])


class ExpressionPolicy:
    """Deterministic tanh-squashed policy backed by one tree per action dimension."""

    def __init__(self, trees: Sequence[Expr]):
        self.trees = list(trees)

    def preactivation(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        batch = states.reshape(1, -1) if states.ndim == 1 else states
        out = np.stack([evaluate(t, batch) for t in self.trees], axis=1)
        return out[0] if states.ndim == 1 else out

    def __call__(self, states) -> np.ndarray:
        return np.tanh(self.preactivation(states))
