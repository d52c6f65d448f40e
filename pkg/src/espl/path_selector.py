"""Probabilistic path selection over symbolic-network weights.

Masks are Bernoulli draws when collecting data or evaluating, and
straight-through Gumbel-sigmoid samples during gradient steps.  The expected
L0 norm of the mask is the sum of the probabilities, which the selection loss
squeezes toward an annealed minimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

LOGIT_EPS = 1e-6


@dataclass
class SelectorState:
    """Probabilities plus the temperature / minimum-L0 schedule settings."""

    p: ad.Node
    schedule_iters: int
    target_temperature: float = 0.2
    target_l0_ratio: float = 0.002
    t: int = 0

    @classmethod
    def create(cls, n_weights: int, init: float = 0.95, **kwargs) -> "SelectorState":
        return cls(p=ad.leaf(np.full(n_weights, init)), **kwargs)

    @property
    def n_weights(self) -> int:
        return int(self.p.value.size)

    def current(self) -> tuple[float, float]:
        return schedule(self.t, self.schedule_iters, self.target_temperature,
                        self.target_l0_ratio, self.n_weights)

    def clip(self):
        np.clip(self.p.value, 0.0, 1.0, out=self.p.value)

    @property
    def l0_ratio(self) -> float:
        return float(self.p.value.sum() / self.n_weights)

    @property
    def uncertainty(self) -> float:
        return uncertainty(self.p.value)


def sample_mask_eval(p, rng: np.random.Generator) -> np.ndarray:
    """Binary mask with ``m_i ~ Bern(p_i)``."""
    p = np.asarray(p.value if isinstance(p, ad.Node) else p, dtype=np.float64)
    return (rng.random(p.shape) < p).astype(np.float64)


def deterministic_mask(p) -> np.ndarray:
    p = np.asarray(p.value if isinstance(p, ad.Node) else p, dtype=np.float64)
    return (p >= 0.5).astype(np.float64)


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """``g1 - g0`` for i.i.d. standard Gumbel draws."""
    g = rng.gumbel(size=(2,) + tuple(np.atleast_1d(shape)))
    return g[1] - g[0]


def relaxed_mask(p, tau: float, noise) -> ad.Node:
    """The Gumbel-sigmoid sample ``m_gs`` for fixed noise ``g1 - g0``."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    p = ad._as_node(p)
    pc = ad.clamp(p, LOGIT_EPS, 1.0 - LOGIT_EPS)
    logit = ad.log(pc) - ad.log(1.0 - pc)
    return ad.sigmoid((logit + noise) * (1.0 / tau))


def sample_mask_train(p, tau: float, rng: np.random.Generator | None = None, noise=None) -> ad.Node:
    """Straight-through mask: binary forward value, relaxed gradient.

    Pass ``noise`` (the ``g1 - g0`` array) to freeze the Gumbel draw.
    """
    p = ad._as_node(p)
    if noise is None:
        if rng is None:
            raise ValueError("need an rng or explicit noise")
        noise = gumbel_noise(p.value.shape, rng)
    m_gs = relaxed_mask(p, tau, noise)
    hard = ad.indicator_ge(m_gs, 0.5)
    return hard + (m_gs - ad.stop_gradient(m_gs))


def select_loss(p, l_min: float) -> ad.Node:
    """Hinge on the expected L0 norm: ``max(sum(p) - l_min, 0)``."""
    return ad.relu(ad.sum(p) - l_min)


def l1_loss(weights, scale: float) -> ad.Node:
    total = None
    for w in weights:
        term = ad.sum(ad.maximum(w, -w))
        total = term if total is None else total + term
    return total * scale


def schedule(t: int, t_s: int, tau_target: float, l0_target: float, n_weights: int) -> tuple[float, float]:
    """Linear temperature decay and parabolic minimum-L0 decay, saturating at ``t_s``."""
    if t_s <= 0:
        raise ValueError("schedule horizon must be positive")
    remaining = 1.0 - min(t, t_s) / t_s
    tau = (1.0 - tau_target) * remaining + tau_target
    l_min = (l0_target + (1.0 - l0_target) * remaining ** 2) * n_weights
    return tau, l_min


def uncertainty(p) -> float:
    """Mean distance of the probabilities from 0.5 (0.5 means fully decided)."""
    p = np.asarray(p.value if isinstance(p, ad.Node) else p, dtype=np.float64)
    return float(np.mean(np.abs(p - 0.5)))
