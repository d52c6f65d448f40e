"""Plain MLPs, Adam and Polyak averaging on top of the tape autodiff."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad


class MLP:
    """Fully connected ReLU network with a linear head.

    ``dtype`` sets the parameter precision; float32 roughly halves matmul time
    and is what the critics train with.  Inputs are cast to match.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, dtype=np.float64,
                 last_bias: float = 0.0):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.weights, self.biases = [], []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(self.dtype)
            b = rng.uniform(-bound, bound, size=(1, n_out)).astype(self.dtype)
            if i == len(sizes) - 2 and last_bias:
                b[:] = last_bias
            self.weights.append(ad.Node(w, requires_grad=True))
            self.biases.append(ad.Node(b, requires_grad=True))

    def parameters(self) -> list[ad.Node]:
        return self.weights + self.biases

    def forward(self, x, frozen: bool = False) -> ad.Node:
        """Tape-recorded forward; ``frozen`` treats the parameters as constants."""
        h = ad.cast(ad._as_node(x), self.dtype)
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if frozen:
                w, b = ad.Node(w.value), ad.Node(b.value)
            h = ad.linear(h, w, b, relu=i < n - 1)
        return ad.cast(h, np.float64)

    def __call__(self, x) -> np.ndarray:
        """Value-only forward in numpy."""
        h = np.asarray(x, dtype=self.dtype)
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.value + b.value
            if i < n - 1:
                np.maximum(h, 0.0, out=h)
        return h.astype(np.float64)

    def state(self) -> list[np.ndarray]:
        return [p.value.copy() for p in self.parameters()]

    def load_state(self, arrays: Sequence[np.ndarray]):
        for p, v in zip(self.parameters(), arrays):
            p.value = np.array(v, dtype=p.value.dtype)


def polyak(target: Sequence[ad.Node], source: Sequence[ad.Node], coeff: float):
    """``target <- (1 - coeff) * target + coeff * source`` in place."""
    for t, s in zip(target, source):
        if coeff == 1.0:
            t.value[...] = s.value
        else:
            t.value *= 1.0 - coeff
            t.value += coeff * s.value


class Adam:
    """Adam over a list of parameter nodes; gradients come from ``node.grad``."""

    def __init__(self, params: Sequence[ad.Node], lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray] | None = None):
        grads = [p.grad for p in self.params] if grads is None else grads
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                continue
            g = g.astype(p.value.dtype, copy=False)
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.value -= (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": [a.copy() for a in self.m], "v": [a.copy() for a in self.v]}

    def load_state(self, state: dict):
        self.t = int(state["t"])
        self.m = [np.array(a) for a in state["m"]]
        self.v = [np.array(a) for a in state["v"]]


class ReplayBuffer:
    """Ring buffer of ``(s, a, r, s', terminal)`` with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, min_fill: int = 0):
        self.capacity = int(capacity)
        self.min_fill = int(min_fill)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.terminals = np.zeros(self.capacity)
        self._ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, terminal):
        i = self._ptr
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = float(terminal)
        self._ptr = (self._ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    @property
    def ready(self) -> bool:
        return self.size >= max(self.min_fill, 1)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict:
        if not self.ready:
            raise RuntimeError(f"buffer holds {self.size} transitions, needs {self.min_fill} before sampling")
        idx = rng.integers(0, self.size, size=batch_size)
        return {"obs": self.obs[idx], "actions": self.actions[idx], "rewards": self.rewards[idx],
                "next_obs": self.next_obs[idx], "terminals": self.terminals[idx]}

    def state(self) -> dict:
        n = self.size
        return {"obs": self.obs[:n], "actions": self.actions[:n], "rewards": self.rewards[:n],
                "next_obs": self.next_obs[:n], "terminals": self.terminals[:n],
                "ptr": np.array(self._ptr)}
