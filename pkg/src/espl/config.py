"""Run configuration with per-environment defaults, JSON I/O and hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .envs import canonical_kind
from .symbolic_network import STRUCTURES


class ConfigError(ValueError):
    pass


# (selection scale, target L0 ratio, schedule iterations)
ENV_DEFAULTS = {
    "cartpole": (0.08, 0.002, 400),
    "mountaincar": (0.64, 0.002, 200),
    "pendulum": (0.08, 0.002, 300),
}

SELECTORS = ("gumbel", "l1", "none")


@dataclass
class TrainerConfig:
    env: str = "cartpole"
    structure: str = "dense-arranged"
    seed: int = 0
    iterations: int = 500
    steps_per_iter: int = 1000
    gamma: float = 0.99
    batch_size: int = 256
    lr: float = 3e-4
    reward_scale: float = 1.0
    polyak: float = 0.005
    target_temperature: float = 0.2
    alpha1: float = 1.0
    alpha2: float = 0.08
    l0_ratio: float = 0.002
    schedule_iters: int = 400
    init_p: float = 0.95
    selector: str = "gumbel"
    l1_scale: float = 1e-3
    auto_entropy: bool = True
    alpha_init: float = 1.0
    fixed_alpha: float = 0.2
    critic_hidden: tuple = (256, 256)
    std_hidden: tuple = (64, 64)
    critic_dtype: str = "float32"
    replay_capacity: int = 1_000_000
    min_fill: int = 256
    warmup_episodes: int = 5
    eval_every: int = 10
    eval_episodes: int = 10
    final_eval_episodes: int = 100
    horizon: int | None = None
    layers: list | None = None
    profile: str = "full"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.critic_hidden = tuple(self.critic_hidden)
        self.std_hidden = tuple(self.std_hidden)
        self.validate()

    @classmethod
    def for_env(cls, env: str, ci: bool = False, **overrides) -> "TrainerConfig":
        kind = canonical_kind(env)
        if kind not in ENV_DEFAULTS:
            raise ConfigError(f"no single-task defaults for {env!r}")
        alpha2, l0, t_s = ENV_DEFAULTS[kind]
        base = dict(env=kind, alpha2=alpha2, l0_ratio=l0, schedule_iters=t_s)
        if ci:
            base.update(steps_per_iter=250, schedule_iters=200, iterations=250, profile="ci")
        base.update(overrides)
        return cls(**base)

    def validate(self):
        try:
            canonical_kind(self.env)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.structure not in STRUCTURES:
            raise ConfigError(f"structure must be one of {STRUCTURES}, got {self.structure!r}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        for name in ("iterations", "steps_per_iter", "batch_size", "schedule_iters", "replay_capacity"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if not 0.0 < self.polyak <= 1.0:
            raise ConfigError("polyak must lie in (0, 1]")
        if not 0.0 < self.target_temperature <= 1.0:
            raise ConfigError("target_temperature must lie in (0, 1]")
        if not 0.0 < self.l0_ratio <= 1.0:
            raise ConfigError("l0_ratio must lie in (0, 1]")
        if not 0.0 <= self.init_p <= 1.0:
            raise ConfigError("init_p must lie in [0, 1]")
        if self.critic_dtype not in ("float32", "float64"):
            raise ConfigError("critic_dtype must be float32 or float64")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["critic_hidden"] = list(self.critic_hidden)
        d["std_hidden"] = list(self.std_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def replace(self, **changes) -> "TrainerConfig":
        return replace(self, **changes)


def config_hash(d: dict) -> str:
    text = json.dumps(d, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
