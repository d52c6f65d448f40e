"""Contextual symbolic policies: task inference plus generated symbolic networks.

A permutation-invariant encoder turns a task's transitions into a Gaussian
posterior over a latent ``z`` (product of per-transition Gaussian factors).
Two generators map ``z`` to the symbolic networks' weights/biases and to the
path probabilities.  The critic sees ``z`` so the encoder is trained through
the Bellman loss plus a KL term toward the unit Gaussian prior.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import expression as ex
from . import path_selector as ps
from .config import ConfigError, config_hash
from .envs import CartPoleParams, Env, env_spec, evaluate_batch, sample_tasks
from .nets import MLP, Adam, ReplayBuffer, polyak
from .rng import Streams
from .sac_trainer import (LOG_STD_MAX, LOG_STD_MIN, TrainingDiverged, TwinCritic, policy_pipeline,
                          squashed_sample, squashed_sample_values)
from .symbolic_network import NetworkConfig, SymbolicNetwork

VAR_FLOOR = 1e-7


@dataclass
class MetaConfig:
    env: str = "cartpole-fl"
    seed: int = 0
    n_train_tasks: int = 40
    n_test_tasks: int = 10
    iterations: int = 100
    steps_per_iter: int = 2000
    meta_batch: int = 10
    batch_per_task: int = 256
    context_size: int = 64
    collect_tasks: int = 10
    cycles: int = 2
    reward_scale: float = 5.0
    kl_beta: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 0.25
    l0_ratio: float = 0.002
    schedule_iters: int = 25
    target_temperature: float = 0.2
    gamma: float = 0.99
    lr: float = 3e-4
    polyak: float = 0.005
    latent_dim: int = 5
    encoder_hidden: tuple = (200, 200, 200)
    generator_hidden: tuple = (128, 128)
    psi_bias: float = 3.0
    critic_hidden: tuple = (256, 256)
    std_hidden: tuple = (64, 64)
    critic_dtype: str = "float32"
    auto_entropy: bool = True
    alpha_init: float = 1.0
    fixed_alpha: float = 0.2
    structure: str = "dense-arranged"
    warmup_cycles: int = 1
    replay_capacity: int = 100_000
    min_fill: int = 256
    eval_every: int = 5
    adapt_episodes: int = 2
    profile: str = "full"

    def __post_init__(self):
        for name in ("encoder_hidden", "generator_hidden", "critic_hidden", "std_hidden"):
            setattr(self, name, tuple(getattr(self, name)))
        if env_spec(self.env).kind != "cartpole-fl":
            raise ConfigError("meta training supports only cartpole-fl")
        for name in ("n_train_tasks", "iterations", "steps_per_iter", "meta_batch", "latent_dim", "schedule_iters"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.meta_batch > self.n_train_tasks:
            raise ConfigError("meta_batch cannot exceed n_train_tasks")

    @classmethod
    def smoke(cls, **overrides) -> "MetaConfig":
        base = dict(n_train_tasks=10, schedule_iters=10, iterations=30, steps_per_iter=600, meta_batch=5,
                    batch_per_task=64, collect_tasks=5, profile="smoke")
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetaConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown meta config keys: {sorted(unknown)}")
        return cls(**d)

    def hash(self) -> str:
        return config_hash(self.to_dict())


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------

def product_of_gaussians(mu: ad.Node, var: ad.Node) -> tuple[ad.Node, ad.Node]:
    """Combine ``(N, d)`` factors into one ``(d,)`` Gaussian."""
    precision = ad.sum(1.0 / var, axis=0)
    post_var = 1.0 / precision
    post_mu = post_var * ad.sum(mu / var, axis=0)
    return post_mu, post_var


def kl_to_standard_normal(mu: ad.Node, var: ad.Node) -> ad.Node:
    return 0.5 * ad.sum(var + ad.square(mu) - 1.0 - ad.log(var))


class ContextEncoder:
    def __init__(self, transition_dim: int, latent_dim: int, hidden: Sequence[int], rng: np.random.Generator):
        self.latent_dim = latent_dim
        self.net = MLP([transition_dim, *hidden, 2 * latent_dim], rng, np.float64)

    def parameters(self) -> list[ad.Node]:
        return self.net.parameters()

    def factors(self, context) -> tuple[ad.Node, ad.Node]:
        out = self.net.forward(context)
        d = self.latent_dim
        mu = ad.getitem(out, (slice(None), slice(0, d)))
        var = ad.softplus(ad.getitem(out, (slice(None), slice(d, 2 * d)))) + VAR_FLOOR
        return mu, var

    def posterior(self, context) -> tuple[ad.Node, ad.Node]:
        """Posterior mean and variance; an empty context gives the prior ``N(0, I)``."""
        context = np.asarray(getattr(context, "value", context), dtype=np.float64)
        if context.size == 0:
            return ad.constant(np.zeros(self.latent_dim)), ad.constant(np.ones(self.latent_dim))
        return product_of_gaussians(*self.factors(context))

    def posterior_values(self, context) -> tuple[np.ndarray, np.ndarray]:
        mu, var = self.posterior(context)
        return mu.value, var.value


def transitions_to_context(obs, actions, rewards, next_obs) -> np.ndarray:
    return np.concatenate([obs, actions, np.asarray(rewards).reshape(-1, 1), next_obs], axis=1)


# ---------------------------------------------------------------------------
# generators and policy
# ---------------------------------------------------------------------------

class ParamGenerator:
    """``Phi(z)`` -> flat symbolic parameters, ``Psi(z)`` -> path probabilities."""

    def __init__(self, net_config: NetworkConfig, action_dim: int, latent_dim: int, hidden: Sequence[int],
                 rng: np.random.Generator, psi_bias: float = 3.0):
        self.net_config = net_config
        self.action_dim = action_dim
        self.networks = [SymbolicNetwork(net_config, rng) for _ in range(action_dim)]
        n_params = net_config.n_params * action_dim
        n_weights = net_config.n_weights * action_dim
        self.phi = MLP([latent_dim, *hidden, n_params], rng, np.float64)
        self.psi = MLP([latent_dim, *hidden, n_weights], rng, np.float64, last_bias=psi_bias)
        self.n_weights = n_weights

    def parameters(self) -> list[ad.Node]:
        return self.phi.parameters() + self.psi.parameters()

    def generate(self, z) -> tuple[list, list, ad.Node]:
        """Per-network ``(weights, biases)`` node lists and the flat probability node."""
        z = ad.reshape(ad._as_node(z), (1, -1))
        flat = ad.reshape(self.phi.forward(z), (-1,))
        p = ad.reshape(ad.sigmoid(self.psi.forward(z)), (-1,))
        weights, biases = [], []
        size = self.net_config.n_params
        for i, net in enumerate(self.networks):
            ws, bs = net.unflatten(flat[i * size:(i + 1) * size])
            weights.append(ws)
            biases.append(bs)
        return weights, biases, p

    def generate_values(self, z) -> tuple[list, list, np.ndarray]:
        weights, biases, p = self.generate(ad.constant(np.asarray(z, dtype=np.float64)))
        return ([[w.value for w in ws] for ws in weights], [[b.value for b in bs] for bs in biases], p.value)

    def mean_and_penalty(self, obs, weights, biases, mask) -> tuple[ad.Node, ad.Node]:
        mus, pen = [], None
        start = 0
        for net, ws, bs in zip(self.networks, weights, biases):
            m = mask[start:start + net.n_weights]
            start += net.n_weights
            mu, pn = net.forward(obs, net.masked_weights(m, ws), bs)
            mus.append(ad.reshape(mu, (-1, 1)))
            pen = pn if pen is None else pen + pn
        return (mus[0] if len(mus) == 1 else ad.concat(mus, axis=1)), pen

    def mean_values(self, obs, weights, biases, mask) -> np.ndarray:
        cols, start = [], 0
        for net, ws, bs in zip(self.networks, weights, biases):
            m = mask[start:start + net.n_weights]
            start += net.n_weights
            mw = [w * mm for w, mm in zip(ws, net.split_mask(m))]
            cols.append(net.forward_values(obs, mw, bs)[0].reshape(-1, 1))
        return np.concatenate(cols, axis=1)


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

@dataclass
class AdaptResult:
    task: CartPoleParams
    z: np.ndarray
    report: ex.PolicyReport
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns)) if self.returns.size else float("nan")


class MetaTrainer:
    def __init__(self, config: MetaConfig, run_dir: str | Path | None = None):
        self.cfg = cfg = config
        self.spec = env_spec(cfg.env)
        self.streams = Streams(cfg.seed)
        tasks_rng = self.streams["tasks"]
        self.train_tasks = sample_tasks(cfg.env, "train", cfg.n_train_tasks, tasks_rng)
        self.test_tasks = sample_tasks(cfg.env, "test", cfg.n_test_tasks, tasks_rng)
        obs_dim, act_dim, d = self.spec.obs_dim, self.spec.action_dim, cfg.latent_dim
        init = self.streams["init"]
        self.net_config = NetworkConfig.default(obs_dim, cfg.structure, 1)
        self.encoder = ContextEncoder(2 * obs_dim + act_dim + 1, d, cfg.encoder_hidden, init)
        self.generator = ParamGenerator(self.net_config, act_dim, d, cfg.generator_hidden, init, cfg.psi_bias)
        self.std_net = MLP([obs_dim + d, *cfg.std_hidden, act_dim], init, np.float64)
        self.critic = TwinCritic(obs_dim + d, act_dim, cfg.critic_hidden, init, cfg.critic_dtype)
        self.opt_critic = Adam(self.critic.parameters() + self.encoder.parameters(), cfg.lr)
        self.opt_actor = Adam(self.generator.parameters() + self.std_net.parameters(), cfg.lr)
        self.log_alpha = ad.leaf(np.array(np.log(cfg.alpha_init)))
        self.opt_alpha = Adam([self.log_alpha], cfg.lr)
        self.target_entropy = -float(act_dim)
        self.buffers = [ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim, cfg.min_fill) for _ in self.train_tasks]
        self.envs = [Env(cfg.env, task, self.streams[f"env{i}"]) for i, task in enumerate(self.train_tasks)]
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.episodes = 0
        self.logs: list[dict] = []

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.value)) if self.cfg.auto_entropy else self.cfg.fixed_alpha

    # -- policies ---------------------------------------------------------------

    def sample_z(self, context: np.ndarray, rng: np.random.Generator, mean: bool = False) -> np.ndarray:
        mu, var = self.encoder.posterior_values(context)
        return mu if mean else mu + np.sqrt(var) * rng.standard_normal(mu.shape)

    def rollout(self, env: Env, z: np.ndarray, mask: np.ndarray | None, rng: np.random.Generator,
                stochastic: bool = True, buffer: ReplayBuffer | None = None) -> tuple[float, np.ndarray]:
        """One episode; returns the (unscaled) return and the episode's context rows."""
        weights, biases, p = self.generator.generate_values(z)
        if mask is None:
            mask = ps.sample_mask_eval(p, rng) if stochastic else ps.deterministic_mask(p)
        obs = env.reset()
        rows, total = [], 0.0
        while True:
            o = obs.reshape(1, -1)
            mu = self.generator.mean_values(o, weights, biases, mask)
            if stochastic:
                log_std = np.clip(self.std_net(np.concatenate([o, z.reshape(1, -1)], axis=1)), LOG_STD_MIN, LOG_STD_MAX)
                action = np.tanh(mu + np.exp(log_std) * rng.standard_normal(mu.shape))[0]
            else:
                action = np.tanh(mu)[0]
            nxt, reward, done, truncated = env.step(action)
            scaled = reward * self.cfg.reward_scale
            if buffer is not None:
                buffer.add(obs, action, scaled, nxt, done)
            rows.append(np.concatenate([obs, action, [scaled], nxt]))
            total += reward
            obs = nxt
            if done or truncated:
                break
        return total, np.array(rows)

    def context_from_buffer(self, i: int, rng: np.random.Generator) -> np.ndarray:
        buf = self.buffers[i]
        if buf.size == 0:
            return np.zeros((0, self.encoder.net.sizes[0]))
        idx = rng.integers(0, buf.size, size=min(self.cfg.context_size, buf.size))
        return transitions_to_context(buf.obs[idx], buf.actions[idx], buf.rewards[idx], buf.next_obs[idx])

    def collect(self, t: int) -> float:
        cfg = self.cfg
        rng = self.streams["collect"]
        chosen = rng.choice(len(self.train_tasks), size=min(cfg.collect_tasks, len(self.train_tasks)), replace=False)
        returns = []
        for i in chosen:
            context = np.zeros((0, self.encoder.net.sizes[0]))
            for cycle in range(cfg.cycles):
                z = self.sample_z(context, rng)
                ret, rows = self.rollout(self.envs[i], z, None, rng, buffer=self.buffers[i])
                context = rows if context.size == 0 else np.concatenate([context, rows])
                returns.append(ret)
                self.episodes += 1
        return float(np.mean(returns))

    # -- update ------------------------------------------------------------------

    def update(self, tau: float, l_min: float) -> dict:
        cfg = self.cfg
        rng = self.streams["minibatch"]
        gen = self.streams["noise"]
        ready = [i for i, b in enumerate(self.buffers) if b.ready]
        if not ready:
            raise RuntimeError("no task buffer has reached min_fill")
        tasks = rng.choice(ready, size=min(cfg.meta_batch, len(ready)), replace=False)
        alpha = self.alpha
        batches = [self.buffers[i].sample(cfg.batch_per_task, rng) for i in tasks]
        contexts = [self.context_from_buffer(i, rng) for i in tasks]
        z_eps = gen.standard_normal((len(tasks), cfg.latent_dim))
        gumbel = [ps.gumbel_noise(self.generator.n_weights, self.streams["gumbel"]) for _ in tasks]

        with ad.Tape() as tape:
            zs, kls = [], []
            for c, e in zip(contexts, z_eps):
                mu, var = self.encoder.posterior(c)
                zs.append(ad.reparameterized_sample(mu, ad.sqrt(var), e))
                kls.append(kl_to_standard_normal(mu, var))
            z_vals = [z.value for z in zs]

            # soft targets with detached z
            targets = []
            for b, z, noise in zip(batches, z_vals, gumbel):
                ws, bs, p = self.generator.generate_values(z)
                hard = ps.sample_mask_train(ad.constant(p), tau, noise=noise).value
                nz = np.repeat(z.reshape(1, -1), len(b["next_obs"]), axis=0)
                mu_n = self.generator.mean_values(b["next_obs"], ws, bs, hard)
                log_std = np.clip(self.std_net(np.concatenate([b["next_obs"], nz], axis=1)), LOG_STD_MIN, LOG_STD_MAX)
                a_n, logp_n = squashed_sample_values(mu_n, log_std, gen.standard_normal(mu_n.shape))
                q_next = self.critic.target_min(np.concatenate([b["next_obs"], nz], axis=1), a_n)
                targets.append(b["rewards"] + cfg.gamma * (1.0 - b["terminals"]) * (q_next - alpha * logp_n))

            obs_z = ad.concat([ad.concat([ad.constant(b["obs"]),
                                          ad.reshape(z, (1, -1)) * ad.constant(np.ones((len(b["obs"]), 1)))], axis=1)
                               for b, z in zip(batches, zs)], axis=0)
            acts = np.concatenate([b["actions"] for b in batches])
            q1, q2 = self.critic.forward(obs_z, acts)
            y = ad.constant(np.concatenate(targets))
            c_loss = (ad.mean(ad.square(q1 - y)) + ad.mean(ad.square(q2 - y))) * float(len(tasks))
            kl = kls[0]
            for extra in kls[1:]:
                kl = kl + extra
            enc_loss = c_loss + cfg.kl_beta * kl
        for prm in self.opt_critic.params:
            prm.grad = None
        tape.backward(enc_loss)
        self.opt_critic.step()

        with ad.Tape() as tape:
            mus, pens, sel, obs_rows, std_in = [], [], [], [], []
            for b, z, noise in zip(batches, z_vals, gumbel):
                ws, bs, p = self.generator.generate(z)
                mask = ps.sample_mask_train(p, tau, noise=noise)
                mu, pen = self.generator.mean_and_penalty(ad.constant(b["obs"]), ws, bs, mask)
                mus.append(mu)
                pens.append(ad.mean(pen))
                sel.append(ps.select_loss(p, l_min))
                nz = np.repeat(z.reshape(1, -1), len(b["obs"]), axis=0)
                obs_rows.append(np.concatenate([b["obs"], nz], axis=1))
            oz = np.concatenate(obs_rows)
            mu = ad.concat(mus, axis=0)
            log_std = ad.clamp(self.std_net.forward(oz), LOG_STD_MIN, LOG_STD_MAX)
            eps = gen.standard_normal(mu.value.shape)
            action, logp = squashed_sample(mu, log_std, eps)
            q1, q2 = self.critic.forward(oz, action, frozen=True)
            n = float(len(tasks))
            sac = ad.mean(alpha * logp - ad.minimum(q1, q2)) * n
            pen_total, sel_total = pens[0], sel[0]
            for a, s in zip(pens[1:], sel[1:]):
                pen_total, sel_total = pen_total + a, sel_total + s
            a_loss = sac + cfg.alpha1 * pen_total + cfg.alpha2 * sel_total
        for prm in self.opt_actor.params:
            prm.grad = None
        tape.backward(a_loss)
        self.opt_actor.step()
        if cfg.auto_entropy:
            self.opt_alpha.step([np.array(-(float(np.mean(logp.value)) + self.target_entropy))])
        self.critic.update_targets(cfg.polyak)
        return {"critic_loss": float(c_loss.value), "actor_loss": float(a_loss.value), "kl": float(kl.value),
                "penalty": float(pen_total.value)}

    # -- evaluation and adaptation -------------------------------------------------

    def adapt(self, task: CartPoleParams, episodes: int | None = None, seed: int = 0,
              eval_episodes: int = 10, sample_z: bool = False) -> AdaptResult:
        """Collect context with prior-sampled policies, then extract the posterior-mean policy."""
        episodes = self.cfg.adapt_episodes if episodes is None else episodes
        rng = np.random.default_rng(seed)
        env = Env(self.cfg.env, task, rng)
        rows = []
        for _ in range(episodes):
            z = rng.standard_normal(self.cfg.latent_dim)
            _, r = self.rollout(env, z, None, rng)
            rows.append(r)
        context = np.concatenate(rows) if rows else np.zeros((0, 1))
        z = self.sample_z(context, rng, mean=not sample_z)
        weights, biases, p = self.generator.generate_values(z)
        mask = ps.deterministic_mask(p)
        provenance = {"task": vars(task).copy(), "context_seed": seed, "context_episodes": episodes,
                      "config_hash": self.cfg.hash(), "uncertainty": ps.uncertainty(p),
                      "l0_ratio": float(np.mean(p))}
        report = policy_pipeline(self.generator.networks, mask, self.cfg.env, weights, biases,
                                 samples=2000, provenance=provenance)
        returns = np.zeros(0)
        if eval_episodes:
            returns, _ = evaluate_batch(self.cfg.env, ex.ExpressionPolicy(report.trees),
                                        [seed * 1000 + 1 + i for i in range(eval_episodes)], task)
        return AdaptResult(task, z, report, returns)

    def evaluate_tasks(self, tasks: Sequence[CartPoleParams], eval_episodes: int = 5, seed: int = 0) -> list[AdaptResult]:
        return [self.adapt(task, seed=seed + i, eval_episodes=eval_episodes) for i, task in enumerate(tasks)]

    # -- main loop -------------------------------------------------------------------

    def train(self, progress=None) -> dict:
        cfg = self.cfg
        start = time.time()
        writer = None
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            fh = open(self.run_dir / "meta_log.csv", "w", newline="")
            cols = ["iter", "episodes", "return_train", "return_test", "l0_ratio", "uncertainty",
                    "tau", "lmin", "actor_loss", "critic_loss", "kl", "penalty", "alpha"]
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
        n_weights = self.generator.n_weights
        try:
            for t in range(cfg.iterations):
                tau, l_min = ps.schedule(t, cfg.schedule_iters, cfg.target_temperature, cfg.l0_ratio,
                                         self.net_config.n_weights)
                ret = self.collect(t)
                sums = {"critic_loss": 0.0, "actor_loss": 0.0, "kl": 0.0, "penalty": 0.0}
                n = 0
                if any(b.ready for b in self.buffers):
                    for step in range(cfg.steps_per_iter):
                        out = self.update(tau, l_min)
                        if not all(np.isfinite(v) for v in out.values()):
                            raise TrainingDiverged(f"non-finite loss at iteration {t}, step {step}",
                                                   {"iteration": t, "step": step, **out})
                        for k in sums:
                            sums[k] += out[k]
                        n += 1
                ps_now = [self.generator.generate_values(np.zeros(cfg.latent_dim))[2]]
                row = {"iter": t, "episodes": self.episodes, "return_train": ret, "return_test": "",
                       "l0_ratio": float(np.mean(ps_now[0])), "uncertainty": ps.uncertainty(ps_now[0]),
                       "tau": tau, "lmin": l_min / self.net_config.n_weights * n_weights, "alpha": self.alpha,
                       **{k: (v / n if n else "") for k, v in sums.items()}}
                if (t + 1) % cfg.eval_every == 0 or t == cfg.iterations - 1:
                    res = self.evaluate_tasks(self.test_tasks[:5], eval_episodes=3, seed=7_000)
                    row["return_test"] = float(np.mean([r.mean_return for r in res]))
                self.logs.append(row)
                if writer is not None:
                    writer.writerow(row)
                    fh.flush()
                if progress is not None:
                    progress(row)
        finally:
            if writer is not None:
                fh.close()
        if self.run_dir is not None:
            self.save_checkpoint(self.run_dir / "meta_checkpoint.npz")
        return {"seconds": time.time() - start, "episodes": self.episodes, "logs": self.logs}

    # -- checkpoints -------------------------------------------------------------------

    def _modules(self) -> dict:
        return {"encoder": self.encoder.net, "phi": self.generator.phi, "psi": self.generator.psi,
                "std": self.std_net, "q1": self.critic.q1, "q2": self.critic.q2,
                "q1_targ": self.critic.q1_targ, "q2_targ": self.critic.q2_targ}

    def save_checkpoint(self, path):
        arrays = {f"{name}/{j}": v for name, mod in self._modules().items() for j, v in enumerate(mod.state())}
        arrays["log_alpha"] = self.log_alpha.value
        header = {"format": "espl-meta-checkpoint/1", "config": self.cfg.to_dict(), "config_hash": self.cfg.hash(),
                  "episodes": self.episodes,
                  "train_tasks": [vars(t) for t in self.train_tasks],
                  "test_tasks": [vars(t) for t in self.test_tasks]}
        arrays["header"] = np.array(json.dumps(header))
        np.savez(path, **arrays)

    @classmethod
    def from_checkpoint(cls, path) -> "MetaTrainer":
        data = np.load(path, allow_pickle=False)
        header = json.loads(str(data["header"]))
        trainer = cls(MetaConfig.from_dict(header["config"]))
        for name, mod in trainer._modules().items():
            mod.load_state([data[f"{name}/{j}"] for j in range(len(mod.parameters()))])
        trainer.log_alpha.value = np.array(data["log_alpha"])
        trainer.train_tasks = [CartPoleParams(**t) for t in header["train_tasks"]]
        trainer.test_tasks = [CartPoleParams(**t) for t in header["test_tasks"]]
        trainer.episodes = header["episodes"]
        return trainer


def random_policy_return(kind: str, tasks: Sequence[CartPoleParams], episodes: int = 10, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    vals = []
    for i, task in enumerate(tasks):
        r, _ = evaluate_batch(kind, lambda o: rng.uniform(-1, 1, size=(len(o), 1)),
                              [seed * 1000 + i * 100 + j for j in range(episodes)], task)
        vals.append(r.mean())
    return float(np.mean(vals))


def distinct_expressions(results: Sequence[AdaptResult]) -> int:
    """Number of distinct displayed (2-decimal) expressions among adapted policies."""
    return len({tuple(r.report.infix) for r in results})


def sweep(trainer: MetaTrainer, forces: Sequence[float], lengths: Sequence[float], episodes: int = 2,
          seed: int = 0) -> list[dict]:
    """Gains of the adapted policy over an (f, L) grid."""
    from .stability import gains_from_tree

    rows = []
    for i, f in enumerate(forces):
        for j, L in enumerate(lengths):
            task = replace(CartPoleParams(f=10.0), f=float(f), L=float(L))
            res = trainer.adapt(task, episodes, seed=seed + i * len(lengths) + j, eval_episodes=0)
            gains, offset, how = gains_from_tree(res.report.trees[0])
            rows.append({"f": float(f), "L": float(L), "c1": float(gains[2]), "c2": float(gains[3]),
                         "b": float(offset), "k_x": float(gains[0]), "k_x_dot": float(gains[1]),
                         "linearization": how, "expression": res.report.infix[0]})
    return rows
