"""Classic-control environments with a ``[-1, 1]`` action interface.

The step functions are pure and broadcast over a leading batch axis, so the
same code drives single episodes and batched evaluation.  Action scaling
(force, torque, power) happens here, after the policy's tanh.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

import numpy as np

SUPPORTED = ("cartpole", "pendulum", "mountaincar", "cartpole-fl")
UNSUPPORTED = (
    "hopper", "walker2d", "bipedalwalker", "lunarlander", "invdoublepend",
    "invpendswingup", "cheetah-vel", "halfcheetah",
)

CARTPOLE_THETA_LIMIT = 0.2095
CARTPOLE_X_LIMIT = 2.4


class UnsupportedEnvError(ValueError):
    pass


@dataclass(frozen=True)
class CartPoleParams:
    f: float = 30.0
    m: float = 0.1
    M: float = 1.0
    L: float = 0.5
    g: float = 9.8

    def __post_init__(self):
        _check_positive(self)


@dataclass(frozen=True)
class PendulumParams:
    g: float = 10.0
    m: float = 1.0
    l: float = 1.0

    def __post_init__(self):
        _check_positive(self)


@dataclass(frozen=True)
class MountainCarParams:
    power: float = 0.0015

    def __post_init__(self):
        _check_positive(self)


def _check_positive(params):
    for name, value in asdict(params).items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{type(params).__name__}.{name} must be positive, got {value}")


def _check_finite(state):
    if not np.all(np.isfinite(state)):
        raise FloatingPointError("non-finite environment state")


# ---------------------------------------------------------------------------
# CartPole
# ---------------------------------------------------------------------------

def cartpole_accelerations(s, a, params: CartPoleParams = CartPoleParams()):
    """``(x_dd, theta_dd)`` for state ``(x, x_dot, theta, theta_dot)`` and action ``a``."""
    s = np.asarray(s, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    theta, theta_dot = s[..., 2], s[..., 3]
    m, M, L, g, f = params.m, params.M, params.L, params.g, params.f
    sin, cos = np.sin(theta), np.cos(theta)
    force = f * a
    theta_dd = (g * sin - cos * (force + L * m * theta_dot ** 2 * sin) / (m + M)) / (
        L * (4.0 / 3.0 - m * cos ** 2 / (m + M)))
    x_dd = (8.0 * force + 2.0 * m * sin * (4.0 * L * theta_dot ** 2 - 3.0 * g * cos)) / (
        8.0 * M - 3.0 * m * np.cos(2.0 * theta) + 5.0 * m)
    return x_dd, theta_dd


def cartpole_derivative(s, a, params: CartPoleParams = CartPoleParams()) -> np.ndarray:
    """Continuous-time state derivative."""
    s = np.asarray(s, dtype=np.float64)
    x_dd, theta_dd = cartpole_accelerations(s, a, params)
    return np.stack([s[..., 1], x_dd, s[..., 3], theta_dd], axis=-1)


def cartpole_step(s, a, params: CartPoleParams = CartPoleParams(), dt: float = 0.02):
    """Semi-implicit Euler step; returns ``(s', reward, done)``.

    ``done`` covers only the failure conditions; the horizon lives in :class:`Env`.
    """
    s = np.asarray(s, dtype=np.float64)
    _check_finite(s)
    a = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    x_dd, theta_dd = cartpole_accelerations(s, a, params)
    x_dot = s[..., 1] + dt * x_dd
    theta_dot = s[..., 3] + dt * theta_dd
    x = s[..., 0] + dt * x_dot
    theta = s[..., 2] + dt * theta_dot
    s_next = np.stack([x, x_dot, theta, theta_dot], axis=-1)
    _check_finite(s_next)
    done = (np.abs(theta) > CARTPOLE_THETA_LIMIT) | (np.abs(x) > CARTPOLE_X_LIMIT)
    reward = np.ones_like(x)
    return s_next, _scalar(reward), _scalar(done)


def cartpole_reset(rng: np.random.Generator, batch=None) -> np.ndarray:
    shape = (4,) if batch is None else (batch, 4)
    return rng.uniform(-0.05, 0.05, size=shape)


# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

PENDULUM_MAX_SPEED = 8.0
PENDULUM_MAX_TORQUE = 2.0


def angle_normalize(theta):
    return ((theta + np.pi) % (2 * np.pi)) - np.pi


def pendulum_step(s, a, params: PendulumParams = PendulumParams(), dt: float = 0.05,
                  max_speed: float | None = PENDULUM_MAX_SPEED):
    """Step on the internal state ``(theta, theta_dot)``; ``theta = 0`` is upright.

    Velocity is updated first and the angle uses the new velocity.  The reward
    is computed on the pre-step state.  ``max_speed=None`` disables the
    velocity clamp.
    """
    s = np.asarray(s, dtype=np.float64)
    _check_finite(s)
    theta, theta_dot = s[..., 0], s[..., 1]
    u = np.clip(PENDULUM_MAX_TORQUE * np.asarray(a, dtype=np.float64), -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE)
    g, m, l = params.g, params.m, params.l
    cost = angle_normalize(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2
    new_dot = theta_dot + (3.0 * g / (2.0 * l) * np.sin(theta) + 3.0 / (m * l ** 2) * u) * dt
    if max_speed is not None:
        new_dot = np.clip(new_dot, -max_speed, max_speed)
    new_theta = theta + new_dot * dt
    s_next = np.stack([new_theta, new_dot], axis=-1)
    _check_finite(s_next)
    return s_next, _scalar(-cost), _scalar(np.zeros_like(cost, dtype=bool))


def pendulum_observe(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.stack([np.cos(s[..., 0]), np.sin(s[..., 0]), s[..., 1]], axis=-1)


def pendulum_energy(s, params: PendulumParams = PendulumParams()):
    """Rod energy (kinetic about the pivot plus potential), zero torque."""
    s = np.asarray(s, dtype=np.float64)
    inertia = params.m * params.l ** 2 / 3.0
    return 0.5 * inertia * s[..., 1] ** 2 + params.m * params.g * params.l / 2.0 * np.cos(s[..., 0])


def pendulum_reset(rng: np.random.Generator, batch=None) -> np.ndarray:
    shape = () if batch is None else (batch,)
    return np.stack([rng.uniform(-np.pi, np.pi, size=shape), rng.uniform(-1.0, 1.0, size=shape)], axis=-1)


# ---------------------------------------------------------------------------
# MountainCar
# ---------------------------------------------------------------------------

MC_MIN_POS, MC_MAX_POS = -1.2, 0.6
MC_MAX_SPEED = 0.07
MC_GOAL = 0.45


def mountaincar_step(s, a, params: MountainCarParams = MountainCarParams()):
    """``(position, velocity)`` step with the standard clipping and goal bonus.

    A step taken from a state already past the goal position is terminal too,
    so the goal region is absorbing.
    """
    s = np.asarray(s, dtype=np.float64)
    _check_finite(s)
    force = np.clip(np.asarray(a, dtype=np.float64), -1.0, 1.0)
    pos, vel = s[..., 0], s[..., 1]
    vel = np.clip(vel + force * params.power - 0.0025 * np.cos(3.0 * pos), -MC_MAX_SPEED, MC_MAX_SPEED)
    new_pos = np.clip(pos + vel, MC_MIN_POS, MC_MAX_POS)
    vel = np.where((new_pos <= MC_MIN_POS) & (vel < 0), 0.0, vel)
    done = ((new_pos >= MC_GOAL) & (vel >= 0.0)) | (pos >= MC_GOAL)
    reward = np.where(done, 100.0, 0.0) - 0.1 * force ** 2
    return np.stack([new_pos, vel], axis=-1), _scalar(reward), _scalar(done)


def mountaincar_reset(rng: np.random.Generator, batch=None) -> np.ndarray:
    shape = () if batch is None else (batch,)
    return np.stack([rng.uniform(-0.6, -0.4, size=shape), np.zeros(shape)], axis=-1)


def _scalar(x):
    x = np.asarray(x)
    return x.item() if x.ndim == 0 else x


# ---------------------------------------------------------------------------
# specs, tasks, env objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvSpec:
    kind: str
    obs_dim: int
    action_dim: int
    horizon: int
    box_low: tuple
    box_high: tuple
    meta: bool = False


_SPECS = {
    "cartpole": EnvSpec("cartpole", 4, 1, 1000, (-2.4, -3.0, -0.25, -3.5), (2.4, 3.0, 0.25, 3.5)),
    "cartpole-fl": EnvSpec("cartpole-fl", 4, 1, 200, (-2.4, -3.0, -0.25, -3.5), (2.4, 3.0, 0.25, 3.5), meta=True),
    "pendulum": EnvSpec("pendulum", 3, 1, 200, (-1.0, -1.0, -8.0), (1.0, 1.0, 8.0)),
    "mountaincar": EnvSpec("mountaincar", 2, 1, 999, (-1.2, -0.07), (0.6, 0.07)),
}


def canonical_kind(kind: str) -> str:
    k = kind.lower().replace("_", "-").replace(" ", "")
    k = {"cartpole-continuous": "cartpole", "mountaincarcontinuous": "mountaincar",
         "mountain-car": "mountaincar", "cartpole-fl-ood": "cartpole-fl"}.get(k, k)
    if k in _SPECS:
        return k
    if any(k.startswith(u) for u in UNSUPPORTED):
        raise UnsupportedEnvError(f"environment {kind!r} is out of scope; supported: {', '.join(SUPPORTED)}")
    raise UnsupportedEnvError(f"unknown environment {kind!r}; supported: {', '.join(SUPPORTED)}")


def env_spec(kind: str) -> EnvSpec:
    return _SPECS[canonical_kind(kind)]


def default_params(kind: str):
    k = canonical_kind(kind)
    if k == "pendulum":
        return PendulumParams()
    if k == "mountaincar":
        return MountainCarParams()
    if k == "cartpole-fl":
        return CartPoleParams(f=10.0)
    return CartPoleParams()


FL_TRAIN = {"f": (7.5, 12.5), "L": (0.3, 0.7)}
FL_TEST = {"f": ((5.0, 7.5), (12.5, 15.0)), "L": ((0.2, 0.3), (0.7, 0.8))}


def _uniform_union(rng, intervals):
    widths = np.array([hi - lo for lo, hi in intervals])
    i = rng.choice(len(intervals), p=widths / widths.sum())
    return float(rng.uniform(*intervals[i]))


def sample_task(kind: str, split: str, rng: np.random.Generator):
    """Task parameters for ``split`` in ``{"train", "test"}``."""
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    k = canonical_kind(kind)
    if not _SPECS[k].meta:
        return default_params(k)
    base = default_params(k)
    if split == "train":
        return replace(base, f=float(rng.uniform(*FL_TRAIN["f"])), L=float(rng.uniform(*FL_TRAIN["L"])))
    return replace(base, f=_uniform_union(rng, FL_TEST["f"]), L=_uniform_union(rng, FL_TEST["L"]))


def sample_tasks(kind: str, split: str, n: int, rng: np.random.Generator) -> list:
    return [sample_task(kind, split, rng) for _ in range(n)]


class Env:
    """Single-owner episodic wrapper around the pure step functions."""

    def __init__(self, kind: str, params=None, rng: np.random.Generator | None = None,
                 horizon: int | None = None):
        self.kind = canonical_kind(kind)
        self.spec = _SPECS[self.kind]
        self.params = params if params is not None else default_params(self.kind)
        self.horizon = horizon or self.spec.horizon
        self.rng = rng if rng is not None else np.random.default_rng()
        self._state = None
        self.t = 0

    @property
    def obs_dim(self) -> int:
        return self.spec.obs_dim

    @property
    def action_dim(self) -> int:
        return self.spec.action_dim

    def observe(self, state=None) -> np.ndarray:
        state = self._state if state is None else state
        return pendulum_observe(state) if self.kind == "pendulum" else np.array(state, dtype=np.float64)

    def reset(self, state=None) -> np.ndarray:
        if state is not None:
            self._state = np.array(state, dtype=np.float64)
        else:
            self._state = _RESET[self.kind](self.rng)
        self.t = 0
        return self.observe()

    def step(self, action):
        """Returns ``(obs, reward, done, truncated)``; ``done`` excludes the horizon."""
        if self._state is None:
            raise RuntimeError("reset() before step()")
        a = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        if not np.isfinite(a):
            raise FloatingPointError("non-finite action")
        self._state, reward, done = _step(self.kind, self._state, a, self.params)
        self.t += 1
        truncated = (not done) and self.t >= self.horizon
        return self.observe(), float(reward), bool(done), bool(truncated)


_RESET = {
    "cartpole": cartpole_reset, "cartpole-fl": cartpole_reset,
    "pendulum": pendulum_reset, "mountaincar": mountaincar_reset,
}


def _step(kind, state, a, params):
    if kind in ("cartpole", "cartpole-fl"):
        return cartpole_step(state, a, params)
    if kind == "pendulum":
        return pendulum_step(state, a, params)
    return mountaincar_step(state, a, params)


def make_env(kind: str, params=None, seed: int | None = None, horizon: int | None = None) -> Env:
    return Env(kind, params, np.random.default_rng(seed), horizon)


def evaluate_batch(kind: str, policy: Callable[[np.ndarray], np.ndarray], seeds: Sequence[int],
                   params=None, horizon: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run one episode per seed in lockstep; returns ``(returns, lengths)``.

    Episode ``i`` starts from the reset distribution drawn with ``seeds[i]``, so
    results do not depend on how many episodes run together.  ``policy`` maps
    a ``(B, obs_dim)`` batch to ``(B, action_dim)`` actions in ``[-1, 1]``.
    """
    k = canonical_kind(kind)
    spec = _SPECS[k]
    params = params if params is not None else default_params(k)
    horizon = horizon or spec.horizon
    episodes = len(seeds)
    state = np.stack([_RESET[k](np.random.default_rng(int(sd))) for sd in seeds])
    alive = np.ones(episodes, dtype=bool)
    returns = np.zeros(episodes)
    lengths = np.zeros(episodes, dtype=int)
    for _ in range(horizon):
        obs = pendulum_observe(state) if k == "pendulum" else state
        act = np.asarray(policy(obs), dtype=np.float64).reshape(episodes, -1)[:, 0]
        nxt, reward, done = _step(k, state, act, params)
        returns += np.where(alive, reward, 0.0)
        lengths += alive
        state = np.where(alive[:, None], nxt, state)
        alive &= ~np.asarray(done, dtype=bool)
        if not alive.any():
            break
    return returns, lengths
