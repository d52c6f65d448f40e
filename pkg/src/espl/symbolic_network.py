"""Densely connected symbolic network: the differentiable space of candidate policies.

Layer ``l`` maps its input through a linear map to ``m + 2n (+3k)`` columns,
feeds those columns into ``m`` unary, ``n`` binary (and ``k`` ternary)
operator slots, and concatenates the slot outputs.  Dense structures feed
each layer ``[s, x_1, ..., x_{l-1}]``; the plain structure feeds ``x_{l-1}``.
A final linear map turns ``[s, x_1, ..., x_L]`` (dense) or ``x_L`` (plain)
into one scalar, so dense networks can express policies linear in ``s``.

Weights are always passed in explicitly (see :meth:`SymbolicNetwork.forward`)
so the same forward pass serves masked single-task training, generated
parameters in meta mode, and extraction checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .symbolic_ops import OperatorKind, apply

STRUCTURES = ("plain", "dense", "dense-arranged")
_PENALIZED = {OperatorKind.MUL, OperatorKind.DIV, OperatorKind.EXP, OperatorKind.LOG}

DEFAULT_ARRANGED_LAYOUT = (
    ("mul", "mul", "div", "div", "sin", "cos"),
    ("mul", "div", "sin", "cos", "exp", "log"),
    ("mul", "sin", "cos", "exp", "log"),
)
DEFAULT_DENSE_LAYOUT = (("mul", "div", "sin", "cos", "exp", "log"),) * 3
DEFAULT_PLAIN_LAYOUT = (("ident", "ident", "ident", "ident", "mul", "div", "sin", "cos", "exp", "log"),) * 3


def default_layout(structure: str) -> tuple[tuple[str, ...], ...]:
    return {
        "plain": DEFAULT_PLAIN_LAYOUT,
        "dense": DEFAULT_DENSE_LAYOUT,
        "dense-arranged": DEFAULT_ARRANGED_LAYOUT,
    }[structure]


@dataclass(frozen=True)
class LayerLayout:
    """Operator slots of one layer; unary slots come first, then binary, then ternary."""

    unary: tuple[OperatorKind, ...] = ()
    binary: tuple[OperatorKind, ...] = ()
    ternary: tuple[OperatorKind, ...] = ()

    def __post_init__(self):
        for group, arity in ((self.unary, 1), (self.binary, 2), (self.ternary, 3)):
            for kind in group:
                if kind.arity != arity:
                    raise ValueError(f"{kind.value} has arity {kind.arity}, placed in arity-{arity} slot")

    @classmethod
    def from_tags(cls, tags: Sequence[str]) -> "LayerLayout":
        kinds = [OperatorKind.parse(t) for t in tags]
        return cls(
            unary=tuple(k for k in kinds if k.arity == 1),
            binary=tuple(k for k in kinds if k.arity == 2),
            ternary=tuple(k for k in kinds if k.arity == 3),
        )

    @property
    def tags(self) -> list[str]:
        return [k.value for k in self.unary + self.binary + self.ternary]

    @property
    def linear_width(self) -> int:
        return len(self.unary) + 2 * len(self.binary) + 3 * len(self.ternary)

    @property
    def output_width(self) -> int:
        return len(self.unary) + len(self.binary) + len(self.ternary)

    def slots(self):
        """Yield ``(kind, input columns, output column)`` for every slot."""
        col, out = 0, 0
        for group, arity in ((self.unary, 1), (self.binary, 2), (self.ternary, 3)):
            for kind in group:
                yield kind, tuple(range(col, col + arity)), out
                col += arity
                out += 1


@dataclass
class NetworkConfig:
    state_dim: int
    layers: list[LayerLayout] = field(default_factory=list)
    structure: str = "dense-arranged"
    action_dims: int = 1
    init_scale: float = 0.5

    def __post_init__(self):
        if self.state_dim <= 0:
            raise ValueError("state_dim must be positive")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        if not self.layers:
            raise ValueError("network needs at least one layer")
        self.layers = [l if isinstance(l, LayerLayout) else LayerLayout.from_tags(l) for l in self.layers]
        for i, layer in enumerate(self.layers):
            if layer.output_width == 0:
                raise ValueError(f"layer {i} has no operators")
        if self.action_dims <= 0:
            raise ValueError("action_dims must be positive")

    @classmethod
    def default(cls, state_dim: int, structure: str = "dense-arranged", action_dims: int = 1):
        return cls(state_dim, [LayerLayout.from_tags(t) for t in default_layout(structure)],
                   structure, action_dims)

    @property
    def dense(self) -> bool:
        return self.structure != "plain"

    @property
    def depth(self) -> int:
        return len(self.layers)

    def input_widths(self) -> list[int]:
        widths, acc, prev = [], self.state_dim, self.state_dim
        for layer in self.layers:
            widths.append(acc if self.dense else prev)
            acc += layer.output_width
            prev = layer.output_width
        return widths

    def final_width(self) -> int:
        if self.dense:
            return self.state_dim + sum(layer.output_width for layer in self.layers)
        return self.layers[-1].output_width

    def weight_shapes(self) -> list[tuple[int, int]]:
        """Shapes of the maskable weight matrices, final map last."""
        shapes = [(layer.linear_width, w) for layer, w in zip(self.layers, self.input_widths())]
        shapes.append((1, self.final_width()))
        return shapes

    def bias_shapes(self) -> list[tuple[int]]:
        return [(layer.linear_width,) for layer in self.layers] + [(1,)]

    @property
    def n_weights(self) -> int:
        return int(sum(r * c for r, c in self.weight_shapes()))

    @property
    def n_params(self) -> int:
        return self.n_weights + int(sum(s[0] for s in self.bias_shapes()))

    def to_dict(self) -> dict:
        return {
            "state_dim": self.state_dim,
            "structure": self.structure,
            "action_dims": self.action_dims,
            "init_scale": self.init_scale,
            "layers": [layer.tags for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(d["state_dim"], [LayerLayout.from_tags(t) for t in d["layers"]],
                   d.get("structure", "dense-arranged"), d.get("action_dims", 1),
                   d.get("init_scale", 0.5))


class _LayerPlan:
    """Precomputed column groups so each operator kind runs once per layer."""

    def __init__(self, layout: LayerLayout):
        groups: dict[OperatorKind, list] = {}
        for kind, cols, out in layout.slots():
            groups.setdefault(kind, []).append((cols, out))
        self.groups = []
        order = []
        for kind, entries in groups.items():
            arity = kind.arity
            cols = [np.array([c[0][i] for c in entries]) for i in range(arity)]
            self.groups.append((kind, cols))
            order.extend(out for _, out in entries)
        self.inverse = np.argsort(np.array(order))
        self.identity_order = bool(np.all(self.inverse == np.arange(len(order))))


class SymbolicNetwork:
    """One symbolic network (one action dimension) with its own parameters."""

    def __init__(self, config: NetworkConfig, rng: np.random.Generator | None = None):
        self.config = config
        self._plans = [_LayerPlan(layer) for layer in config.layers]
        rng = rng if rng is not None else np.random.default_rng(0)
        s = config.init_scale
        self.weights = [ad.leaf(rng.uniform(-s, s, size=shape)) for shape in config.weight_shapes()]
        self.biases = [ad.leaf(np.zeros(shape)) for shape in config.bias_shapes()]

    # -- parameter plumbing --------------------------------------------------

    @property
    def n_weights(self) -> int:
        return self.config.n_weights

    @property
    def n_params(self) -> int:
        return self.config.n_params

    def parameters(self) -> list[ad.Node]:
        return self.weights + self.biases

    def split_mask(self, mask) -> list:
        """Cut a flat mask (node or array) into per-matrix masks."""
        out, start = [], 0
        for shape in self.config.weight_shapes():
            size = shape[0] * shape[1]
            piece = mask[start:start + size]
            out.append(ad.reshape(piece, shape) if isinstance(piece, ad.Node) else piece.reshape(shape))
            start += size
        return out

    def masked_weights(self, mask, weights=None) -> list:
        weights = self.weights if weights is None else weights
        return [ad.mul(w, m) for w, m in zip(weights, self.split_mask(mask))]

    def unflatten(self, flat) -> tuple[list, list]:
        """Split a flat ``[weights..., biases...]`` vector into matrices and vectors."""
        ws, bs, start = [], [], 0
        for shape in self.config.weight_shapes():
            size = shape[0] * shape[1]
            ws.append(ad.reshape(flat[start:start + size], shape))
            start += size
        for shape in self.config.bias_shapes():
            bs.append(flat[start:start + shape[0]])
            start += shape[0]
        return ws, bs

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.value.reshape(-1) for p in self.parameters()])

    def load_flat(self, flat: np.ndarray):
        ws, bs = self.unflatten(ad.constant(np.asarray(flat, dtype=np.float64)))
        for leaf_, v in zip(self.weights + self.biases, ws + bs):
            leaf_.value = np.array(v.value)

    # -- evaluation ----------------------------------------------------------

    def forward(self, states, weights=None, biases=None):
        """Pre-activation output and per-sample penalty sum.

        ``states`` is ``(d,)`` or ``(B, d)``; outputs are scalars or ``(B,)``.
        """
        weights = self.weights if weights is None else weights
        biases = self.biases if biases is None else biases
        s = states if isinstance(states, ad.Node) else ad.constant(states)
        if not np.all(np.isfinite(s.value)):
            raise FloatingPointError("state contains non-finite values")
        single = s.value.ndim == 1
        if single:
            s = ad.reshape(s, (1, -1))
        if s.value.shape[1] != self.config.state_dim:
            raise ad.ShapeError("symbolic forward", s.value.shape, (self.config.state_dim,))

        features = [s]
        x = s
        penalties = []
        for plan, w, b in zip(self._plans, weights[:-1], biases[:-1]):
            inp = (features[0] if len(features) == 1 else ad.concat(features, axis=1)) if self.config.dense else x
            y = ad.add(ad.matmul(inp, ad.transpose(w)), b)
            outs = []
            for kind, cols in plan.groups:
                args = [ad.take(y, c, axis=1) for c in cols]
                out, pen = apply(kind, *args)
                outs.append(out)
                if kind in _PENALIZED:
                    penalties.append(ad.sum(pen, axis=1))
            x = outs[0] if len(outs) == 1 else ad.concat(outs, axis=1)
            if not plan.identity_order:
                x = ad.take(x, plan.inverse, axis=1)
            features.append(x)
        if self.config.dense:
            x = ad.concat(features, axis=1)
        out = ad.add(ad.matmul(x, ad.transpose(weights[-1])), biases[-1])
        out = ad.reshape(out, (-1,))
        if penalties:
            pen = penalties[0]
            for p in penalties[1:]:
                pen = ad.add(pen, p)
        else:
            pen = ad.constant(np.zeros(out.value.shape))
        if single:
            return ad.reshape(out, ()), ad.reshape(pen, ())
        return out, pen

    def forward_values(self, states, weights=None, biases=None):
        """Array-in, array-out forward in plain numpy (no graph nodes)."""
        from .symbolic_ops import apply_values

        weights = [np.asarray(getattr(w, "value", w)) for w in (self.weights if weights is None else weights)]
        biases = [np.asarray(getattr(b, "value", b)) for b in (self.biases if biases is None else biases)]
        s = np.asarray(states, dtype=np.float64)
        if not np.all(np.isfinite(s)):
            raise FloatingPointError("state contains non-finite values")
        single = s.ndim == 1
        if single:
            s = s.reshape(1, -1)
        features, x = [s], s
        pen = np.zeros(s.shape[0])
        for plan, w, b in zip(self._plans, weights[:-1], biases[:-1]):
            inp = np.concatenate(features, axis=1) if self.config.dense else x
            y = inp @ w.T + b
            outs = []
            for kind, cols in plan.groups:
                out, p = apply_values(kind, *[y[:, c] for c in cols])
                outs.append(out)
                if kind in _PENALIZED:
                    pen += p.sum(axis=1)
            x = np.concatenate(outs, axis=1)
            if not plan.identity_order:
                x = x[:, plan.inverse]
            features.append(x)
        if self.config.dense:
            x = np.concatenate(features, axis=1)
        out = (x @ weights[-1].T + biases[-1]).reshape(-1)
        if single:
            return out[0], pen[0]
        return out, pen


def action(networks: Sequence[SymbolicNetwork], states, weights=None, biases=None):
    """Tanh-squashed action, one column per network (action dimension)."""
    outs = []
    for i, net in enumerate(networks):
        w = None if weights is None else weights[i]
        b = None if biases is None else biases[i]
        out, _ = net.forward(states, w, b)
        outs.append(out)
    pre = ad.concat([ad.reshape(o, (-1, 1)) for o in outs], axis=1) if len(outs) > 1 else ad.reshape(outs[0], (-1, 1))
    act = ad.tanh(pre)
    if np.ndim(states.value if isinstance(states, ad.Node) else states) == 1:
        return ad.reshape(act, (-1,))
    return act


def penalty_by_walk(network: SymbolicNetwork, state, weights=None, biases=None) -> float:
    """Re-accumulate the penalty for one state by visiting every operator slot in turn."""
    from .symbolic_ops import apply_values

    weights = [np.asarray(w.value if isinstance(w, ad.Node) else w) for w in (weights or network.weights)]
    biases = [np.asarray(b.value if isinstance(b, ad.Node) else b) for b in (biases or network.biases)]
    s = np.asarray(state, dtype=np.float64)
    features, x, total = [s], s, 0.0
    for layout, w, b in zip(network.config.layers, weights[:-1], biases[:-1]):
        inp = np.concatenate(features) if network.config.dense else x
        y = w @ inp + b
        x = np.zeros(layout.output_width)
        for kind, cols, out in layout.slots():
            value, pen = apply_values(kind, *[y[c] for c in cols])
            x[out] = value
            total += float(pen)
        features.append(x)
    return total
