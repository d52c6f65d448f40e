"""Soft actor-critic over a masked symbolic network.

The actor mean is the symbolic network's pre-activation, the standard deviation
comes from a small MLP used only for exploration, and the path probabilities
are trained jointly through the straight-through mask.  Actor objective::

    mean(alpha * log pi - min Q) + alpha1 * mean(penalty) + alpha2 * select_loss
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import expression as ex
from . import path_selector as ps
from .config import TrainerConfig
from .envs import Env, canonical_kind, default_params, env_spec, evaluate_batch
from .nets import MLP, Adam, ReplayBuffer, polyak
from .rng import Streams
from .symbolic_network import LayerLayout, NetworkConfig, SymbolicNetwork

log = logging.getLogger("espl")

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_LOG2 = float(np.log(2.0))
L1_PRUNE = 0.01

LOG_COLUMNS = ["iter", "episodes", "return_eval", "l0_ratio", "uncertainty", "tau", "lmin",
               "actor_loss", "critic_loss", "penalty", "return_train", "alpha"]

EVAL_SEED_BASE = 10_000
FINAL_SEED_BASE = 1_000_000


class TrainingDiverged(FloatingPointError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# squashed Gaussian
# ---------------------------------------------------------------------------

def tanh_log_det(u: ad.Node) -> ad.Node:
    """``log(1 - tanh(u)^2)`` written stably."""
    return 2.0 * (_LOG2 - u - ad.softplus(-2.0 * u))


def tanh_log_det_values(u: np.ndarray) -> np.ndarray:
    return 2.0 * (_LOG2 - u - np.logaddexp(0.0, -2.0 * u))


def squashed_sample(mu: ad.Node, log_std: ad.Node, eps: np.ndarray) -> tuple[ad.Node, ad.Node]:
    """Reparameterized ``a = tanh(mu + std * eps)`` and its summed log-density."""
    u = ad.reparameterized_sample(mu, ad.exp(log_std), eps)
    logp = ad.gaussian_log_density(u, mu, log_std) - tanh_log_det(u)
    return ad.tanh(u), ad.sum(logp, axis=1)


def squashed_sample_values(mu: np.ndarray, log_std: np.ndarray, eps: np.ndarray):
    std = np.exp(log_std)
    u = mu + std * eps
    logp = -0.5 * eps ** 2 - log_std - 0.5 * np.log(2 * np.pi) - tanh_log_det_values(u)
    return np.tanh(u), logp.sum(axis=1)


# ---------------------------------------------------------------------------
# critic
# ---------------------------------------------------------------------------

class TwinCritic:
    """Two Q-networks with Polyak-averaged target copies."""

    def __init__(self, obs_dim: int, action_dim: int, hidden: Sequence[int], rng: np.random.Generator,
                 dtype="float32"):
        sizes = [obs_dim + action_dim, *hidden, 1]
        self.q1 = MLP(sizes, rng, dtype)
        self.q2 = MLP(sizes, rng, dtype)
        self.q1_targ = MLP(sizes, rng, dtype)
        self.q2_targ = MLP(sizes, rng, dtype)
        polyak(self.q1_targ.parameters(), self.q1.parameters(), 1.0)
        polyak(self.q2_targ.parameters(), self.q2.parameters(), 1.0)

    def parameters(self) -> list[ad.Node]:
        return self.q1.parameters() + self.q2.parameters()

    def forward(self, obs, action, frozen: bool = False) -> tuple[ad.Node, ad.Node]:
        sa = ad.concat([ad._as_node(obs), ad._as_node(action)], axis=1)
        q1 = ad.reshape(self.q1.forward(sa, frozen), (-1,))
        q2 = ad.reshape(self.q2.forward(sa, frozen), (-1,))
        return q1, q2

    def target_min(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        sa = np.concatenate([obs, action], axis=1)
        return np.minimum(self.q1_targ(sa), self.q2_targ(sa)).reshape(-1)

    def update_targets(self, coeff: float):
        polyak(self.q1_targ.parameters(), self.q1.parameters(), coeff)
        polyak(self.q2_targ.parameters(), self.q2.parameters(), coeff)

    def state(self) -> dict:
        return {name: getattr(self, name).state() for name in ("q1", "q2", "q1_targ", "q2_targ")}

    def load_state(self, state: dict):
        for name, arrays in state.items():
            getattr(self, name).load_state(arrays)


def soft_target(critic: TwinCritic, rewards, next_obs, next_actions, next_logp, terminals,
                gamma: float, alpha: float, reward_scale: float = 1.0) -> np.ndarray:
    """``r + gamma * (1 - d) * (min Q_targ(s', a') - alpha * log pi(a'|s'))``."""
    q_next = critic.target_min(next_obs, next_actions)
    return reward_scale * rewards + gamma * (1.0 - terminals) * (q_next - alpha * next_logp)


def critic_loss(critic: TwinCritic, obs, actions, targets) -> ad.Node:
    """Sum over both heads of the mean squared Bellman residual."""
    q1, q2 = critic.forward(obs, actions)
    y = ad.constant(targets)
    return ad.mean(ad.square(q1 - y)) + ad.mean(ad.square(q2 - y))


# ---------------------------------------------------------------------------
# actor
# ---------------------------------------------------------------------------

class SymbolicActor:
    """Symbolic mean (one network per action dimension), path probabilities and std net."""

    def __init__(self, net_config: NetworkConfig, obs_dim: int, action_dim: int, std_hidden: Sequence[int],
                 rng: np.random.Generator, init_p: float = 0.95):
        self.networks = [SymbolicNetwork(net_config, rng) for _ in range(action_dim)]
        self.std_net = MLP([obs_dim, *std_hidden, action_dim], rng, np.float64)
        self.n_weights = sum(n.n_weights for n in self.networks)
        self.p = ad.leaf(np.full(self.n_weights, float(init_p)))
        self.action_dim = action_dim

    def symbolic_parameters(self) -> list[ad.Node]:
        return [p for n in self.networks for p in n.parameters()]

    def split(self, mask):
        out, start = [], 0
        for n in self.networks:
            out.append(mask[start:start + n.n_weights])
            start += n.n_weights
        return out

    def mean_and_penalty(self, obs, mask) -> tuple[ad.Node, ad.Node]:
        """``(B, A)`` pre-tanh means and ``(B,)`` penalty under a flat mask (node or array)."""
        mus, pens = [], []
        for net, m in zip(self.networks, self.split(mask)):
            mu, pen = net.forward(obs, net.masked_weights(m))
            mus.append(ad.reshape(mu, (-1, 1)))
            pens.append(pen)
        mu = mus[0] if len(mus) == 1 else ad.concat(mus, axis=1)
        pen = pens[0]
        for extra in pens[1:]:
            pen = pen + extra
        return mu, pen

    def mean_values(self, obs: np.ndarray, mask: np.ndarray) -> np.ndarray:
        cols = []
        for net, m in zip(self.networks, self.split(mask)):
            ws = [w.value * mm for w, mm in zip(net.weights, net.split_mask(m))]
            cols.append(net.forward_values(obs, ws)[0].reshape(-1, 1))
        return np.concatenate(cols, axis=1)

    def log_std(self, obs, frozen: bool = False) -> ad.Node:
        return ad.clamp(self.std_net.forward(obs, frozen), LOG_STD_MIN, LOG_STD_MAX)

    def log_std_values(self, obs: np.ndarray) -> np.ndarray:
        return np.clip(self.std_net(obs), LOG_STD_MIN, LOG_STD_MAX)

    def all_weights(self) -> list[np.ndarray]:
        return [w.value for n in self.networks for w in n.weights]

    def snapshot(self) -> dict:
        return {"weights": [[w.value.copy() for w in n.weights] for n in self.networks],
                "biases": [[b.value.copy() for b in n.biases] for n in self.networks],
                "p": self.p.value.copy()}

    def load_snapshot(self, snap: dict):
        for n, ws, bs in zip(self.networks, snap["weights"], snap["biases"]):
            for leaf_, v in zip(n.weights, ws):
                leaf_.value = np.array(v, dtype=np.float64)
            for leaf_, v in zip(n.biases, bs):
                leaf_.value = np.array(v, dtype=np.float64)
        self.p.value = np.array(snap["p"], dtype=np.float64)


def actor_objective(actor: SymbolicActor, critic: TwinCritic, obs: np.ndarray, eps: np.ndarray,
                    mask, alpha: float, alpha1: float, alpha2: float, l_min: float,
                    selector: str = "gumbel", l1_scale: float = 0.0) -> tuple[ad.Node, dict]:
    """The full actor loss for one minibatch; ``mask`` is a node for the ST path."""
    obs_n = ad.constant(obs)
    mu, pen = actor.mean_and_penalty(obs_n, mask)
    action, logp = squashed_sample(mu, actor.log_std(obs_n), eps)
    q1, q2 = critic.forward(obs_n, action, frozen=True)
    sac = ad.mean(alpha * logp - ad.minimum(q1, q2))
    penalty = ad.mean(pen)
    loss = sac + alpha1 * penalty
    if selector == "gumbel" and alpha2:
        loss = loss + alpha2 * ps.select_loss(actor.p, l_min)
    elif selector == "l1" and l1_scale:
        loss = loss + ps.l1_loss([w for n in actor.networks for w in n.weights], l1_scale)
    return loss, {"logp": logp.value, "penalty": float(penalty.value), "sac": float(sac.value)}


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    config: TrainerConfig
    report: ex.PolicyReport
    final_returns: np.ndarray
    best_iteration: int
    best_return_eval: float
    snapshot: dict
    logs: list = field(default_factory=list)
    episodes: int = 0
    seconds: float = 0.0

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.final_returns))


def network_config_for(cfg: TrainerConfig, obs_dim: int) -> NetworkConfig:
    if cfg.layers:
        layers = [LayerLayout.from_tags(tags) for tags in cfg.layers]
        return NetworkConfig(obs_dim, layers, cfg.structure, 1)
    return NetworkConfig.default(obs_dim, cfg.structure, 1)


def policy_pipeline(networks: Sequence[SymbolicNetwork], mask: np.ndarray, kind: str,
                    weights=None, biases=None, samples: int = 10000,
                    provenance: dict | None = None) -> ex.PolicyReport:
    """extract -> simplify -> verify on the state box -> simplify -> metrics."""
    spec = env_spec(kind)
    trees, notes = [], []
    rng = np.random.default_rng(0)
    for tree in ex.extract_policy(networks, mask, weights, biases):
        tree = ex.simplify(tree)
        tree, found = ex.verify_and_strip(tree, spec.box_low, spec.box_high, samples, rng)
        trees.append(ex.simplify(tree))
        notes.extend(found)
    report = ex.metrics(trees, provenance)
    report.assumptions = notes
    return report


def evaluate(policy: Callable[[np.ndarray], np.ndarray], kind: str, episodes: int,
             seed_base: int = FINAL_SEED_BASE, params=None, horizon: int | None = None) -> dict:
    """Mean/std of undiscounted returns; episode ``i`` resets with seed ``seed_base + i``."""
    seeds = [seed_base + i for i in range(episodes)]
    returns, lengths = evaluate_batch(kind, policy, seeds, params, horizon)
    return {"mean": float(np.mean(returns)), "std": float(np.std(returns)),
            "returns": returns, "lengths": lengths, "seeds": seeds}


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

class Trainer:
    def __init__(self, config: TrainerConfig, run_dir: str | Path | None = None):
        self.cfg = cfg = config
        self.kind = canonical_kind(cfg.env)
        self.spec = env_spec(self.kind)
        self.streams = Streams(cfg.seed)
        self.env = Env(self.kind, default_params(self.kind), self.streams["env"], cfg.horizon)
        obs_dim, act_dim = self.spec.obs_dim, self.spec.action_dim
        self.net_config = network_config_for(cfg, obs_dim)
        init = self.streams["init"]
        init_p = cfg.init_p if cfg.selector == "gumbel" else 1.0
        self.actor = SymbolicActor(self.net_config, obs_dim, act_dim, cfg.std_hidden, init, init_p)
        self.critic = TwinCritic(obs_dim, act_dim, cfg.critic_hidden, init, cfg.critic_dtype)
        actor_params = self.actor.symbolic_parameters() + self.actor.std_net.parameters()
        if cfg.selector == "gumbel":
            actor_params.append(self.actor.p)
        self.opt_actor = Adam(actor_params, cfg.lr)
        self.opt_critic = Adam(self.critic.parameters(), cfg.lr)
        self.log_alpha = ad.leaf(np.array(np.log(cfg.alpha_init)))
        self.opt_alpha = Adam([self.log_alpha], cfg.lr)
        self.target_entropy = -float(act_dim)
        self.buffer = ReplayBuffer(cfg.replay_capacity, obs_dim, act_dim, cfg.min_fill)
        self.selector = ps.SelectorState(self.actor.p, cfg.schedule_iters, cfg.target_temperature, cfg.l0_ratio)
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.episodes = 0
        self.iteration = 0
        self.logs: list[dict] = []

    # -- helpers -------------------------------------------------------------

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.value)) if self.cfg.auto_entropy else self.cfg.fixed_alpha

    def deterministic_mask(self) -> np.ndarray:
        if self.cfg.selector == "gumbel":
            return ps.deterministic_mask(self.actor.p)
        if self.cfg.selector == "l1":
            return np.concatenate([(np.abs(w) >= L1_PRUNE).reshape(-1) for w in self.actor.all_weights()])
        return np.ones(self.actor.n_weights)

    def episode_mask(self) -> np.ndarray:
        if self.cfg.selector == "gumbel":
            return ps.sample_mask_eval(self.actor.p, self.streams["mask"])
        return np.ones(self.actor.n_weights)

    def collect_episode(self, random: bool = False) -> tuple[float, int]:
        obs = self.env.reset()
        mask = self.episode_mask()
        noise = self.streams["noise"]
        total, steps = 0.0, 0
        while True:
            if random:
                action = noise.uniform(-1.0, 1.0, size=self.spec.action_dim)
            else:
                o = obs.reshape(1, -1)
                mu = self.actor.mean_values(o, mask)
                log_std = self.actor.log_std_values(o)
                action = np.tanh(mu + np.exp(log_std) * noise.standard_normal(mu.shape))[0]
            nxt, reward, done, truncated = self.env.step(action)
            self.buffer.add(obs, action, reward, nxt, done)
            total += reward
            steps += 1
            obs = nxt
            if done or truncated:
                break
        self.episodes += 1
        return total, steps

    def update(self, tau: float, l_min: float) -> dict:
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_size, self.streams["minibatch"])
        obs, actions = batch["obs"], batch["actions"]
        alpha = self.alpha
        if cfg.selector == "gumbel":
            noise = ps.gumbel_noise(self.actor.n_weights, self.streams["gumbel"])
            hard = ps.sample_mask_train(ad.constant(self.actor.p.value), tau, noise=noise).value
        else:
            noise, hard = None, np.ones(self.actor.n_weights)

        # critic
        gen = self.streams["noise"]
        mu_n = self.actor.mean_values(batch["next_obs"], hard)
        a_n, logp_n = squashed_sample_values(mu_n, self.actor.log_std_values(batch["next_obs"]),
                                             gen.standard_normal(mu_n.shape))
        y = soft_target(self.critic, batch["rewards"], batch["next_obs"], a_n, logp_n, batch["terminals"],
                        cfg.gamma, alpha, cfg.reward_scale)
        with ad.Tape() as tape:
            c_loss = critic_loss(self.critic, obs, actions, y)
        tape.backward(c_loss)
        self.opt_critic.step()

        # actor (critic frozen)
        eps = gen.standard_normal((cfg.batch_size, self.spec.action_dim))
        with ad.Tape() as tape:
            mask = ps.sample_mask_train(self.actor.p, tau, noise=noise) if noise is not None else ad.constant(hard)
            a_loss, info = actor_objective(self.actor, self.critic, obs, eps, mask, alpha, cfg.alpha1,
                                           cfg.alpha2, l_min, cfg.selector, cfg.l1_scale)
        for prm in self.opt_actor.params:
            prm.grad = None
        tape.backward(a_loss)
        self.opt_actor.step()
        self.selector.clip()

        if cfg.auto_entropy:
            g = -(float(np.mean(info["logp"])) + self.target_entropy)
            self.opt_alpha.step([np.array(g)])
        self.critic.update_targets(cfg.polyak)
        return {"critic_loss": float(c_loss.value), "actor_loss": float(a_loss.value),
                "penalty": info["penalty"]}

    def current_trees(self, mask=None) -> list:
        mask = self.deterministic_mask() if mask is None else mask
        return [ex.simplify(t) for t in ex.extract_policy(self.actor.networks, mask)]

    def evaluate_current(self, episodes: int, seed_base: int = EVAL_SEED_BASE) -> float:
        policy = ex.ExpressionPolicy(self.current_trees())
        return evaluate(policy, self.kind, episodes, seed_base, horizon=self.cfg.horizon)["mean"]

    # -- main loop -----------------------------------------------------------

    def train(self, progress: Callable[[dict], None] | None = None) -> TrainResult:
        cfg = self.cfg
        start = time.time()
        best = (-np.inf, -1, None)
        last = None
        writer = None
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            fh = open(self.run_dir / "train_log.csv", "w", newline="")
            writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
            writer.writeheader()
        try:
            for t in range(cfg.iterations):
                self.iteration = t
                self.selector.t = t
                tau, l_min = self.selector.current()
                ret_train, _ = self.collect_episode(random=t < cfg.warmup_episodes)
                sums = {"critic_loss": 0.0, "actor_loss": 0.0, "penalty": 0.0}
                n = 0
                if self.buffer.ready:
                    for step in range(cfg.steps_per_iter):
                        out = self.update(tau, l_min)
                        if not all(np.isfinite(v) for v in out.values()):
                            raise TrainingDiverged(f"non-finite loss at iteration {t}, step {step}",
                                                   {"iteration": t, "step": step, **out})
                        for k in sums:
                            sums[k] += out[k]
                        n += 1
                row = {"iter": t, "episodes": self.episodes, "return_eval": "",
                       "l0_ratio": self.selector.l0_ratio, "uncertainty": self.selector.uncertainty,
                       "tau": tau, "lmin": l_min, "return_train": ret_train, "alpha": self.alpha,
                       **{k: (v / n if n else "") for k, v in sums.items()}}
                is_last = t == cfg.iterations - 1
                if (t + 1) % cfg.eval_every == 0 or is_last:
                    r = self.evaluate_current(cfg.eval_episodes)
                    row["return_eval"] = r
                    post = t >= cfg.schedule_iters or cfg.iterations <= cfg.schedule_iters
                    if post and r >= best[0]:
                        best = (r, t, self.actor.snapshot())
                    last = (r, t, self.actor.snapshot())
                self.logs.append(row)
                if writer is not None:
                    writer.writerow(row)
                    fh.flush()
                if progress is not None:
                    progress(row)
        finally:
            if writer is not None:
                fh.close()

        best_r, best_t, snap = best if best[2] is not None else last
        self.actor.load_snapshot(snap)
        mask = self.deterministic_mask()
        provenance = {"config_hash": cfg.hash(), "seed": cfg.seed, "iteration": best_t,
                      "env": self.kind, "structure": cfg.structure}
        report = policy_pipeline(self.actor.networks, mask, self.kind, provenance=provenance)
        final = evaluate(ex.ExpressionPolicy(report.trees), self.kind, cfg.final_eval_episodes,
                         horizon=cfg.horizon)
        report.provenance["final_mean_return"] = final["mean"]
        result = TrainResult(cfg, report, final["returns"], best_t, best_r, snap, self.logs,
                             self.episodes, time.time() - start)
        if self.run_dir is not None:
            write_artifacts(self.run_dir, self, result, final)
        return result

    # -- checkpoints -----------------------------------------------------------

    def save_checkpoint(self, path: str | Path, best_snapshot: dict | None = None):
        arrays = {}
        for i, net in enumerate(self.actor.networks):
            for j, w in enumerate(net.weights):
                arrays[f"actor/{i}/w{j}"] = w.value
            for j, b in enumerate(net.biases):
                arrays[f"actor/{i}/b{j}"] = b.value
        arrays["actor/p"] = self.actor.p.value
        for j, v in enumerate(self.actor.std_net.state()):
            arrays[f"std/{j}"] = v
        for name, vals in self.critic.state().items():
            for j, v in enumerate(vals):
                arrays[f"critic/{name}/{j}"] = v
        arrays["log_alpha"] = self.log_alpha.value
        if best_snapshot is not None:
            for i, (ws, bs) in enumerate(zip(best_snapshot["weights"], best_snapshot["biases"])):
                for j, w in enumerate(ws):
                    arrays[f"best/{i}/w{j}"] = w
                for j, b in enumerate(bs):
                    arrays[f"best/{i}/b{j}"] = b
            arrays["best/p"] = best_snapshot["p"]
        header = {"format": "espl-checkpoint/1", "config": self.cfg.to_dict(), "config_hash": self.cfg.hash(),
                  "iteration": self.iteration, "episodes": self.episodes,
                  "rng": _jsonable(self.streams.state())}
        arrays["header"] = np.array(json.dumps(header))
        np.savez(path, **arrays)

    @classmethod
    def from_checkpoint(cls, path: str | Path, use_best: bool = True) -> "Trainer":
        data = np.load(path, allow_pickle=False)
        header = json.loads(str(data["header"]))
        trainer = cls(TrainerConfig.from_dict(header["config"]))
        prefix = "best" if use_best and "best/p" in data.files else "actor"
        for i, net in enumerate(trainer.actor.networks):
            for j, w in enumerate(net.weights):
                w.value = np.array(data[f"{prefix}/{i}/w{j}"])
            for j, b in enumerate(net.biases):
                b.value = np.array(data[f"{prefix}/{i}/b{j}"])
        trainer.actor.p.value = np.array(data[f"{prefix}/p"])
        trainer.actor.std_net.load_state([data[f"std/{j}"] for j in range(len(trainer.actor.std_net.parameters()))])
        n_mlp = len(trainer.critic.q1.parameters())
        trainer.critic.load_state({name: [data[f"critic/{name}/{j}"] for j in range(n_mlp)]
                                   for name in ("q1", "q2", "q1_targ", "q2_targ")})
        trainer.log_alpha.value = np.array(data["log_alpha"])
        trainer.iteration = header["iteration"]
        trainer.episodes = header["episodes"]
        return trainer


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_artifacts(run_dir: Path, trainer: Trainer, result: TrainResult, final: dict):
    run_dir.mkdir(parents=True, exist_ok=True)
    trainer.save_checkpoint(run_dir / "checkpoint.npz", result.snapshot)
    doc = result.report.to_dict()
    doc["state_dim"] = trainer.spec.obs_dim
    (run_dir / "policy.json").write_text(json.dumps(doc, indent=2))
    (run_dir / "policy.txt").write_text(ex.serialize(result.report.trees, "infix") + "\n")
    with open(run_dir / "eval_episodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "seed", "return", "length"])
        for i, (sd, r, n) in enumerate(zip(final["seeds"], final["returns"], final["lengths"])):
            w.writerow([i, sd, float(r), int(n)])
    summary = {"env": trainer.kind, "seed": trainer.cfg.seed, "structure": trainer.cfg.structure,
               "mean_return": result.mean_return, "std_return": float(np.std(result.final_returns)),
               "eval_episodes": len(result.final_returns), "episodes_collected": result.episodes,
               "best_iteration": result.best_iteration, "best_return_eval": result.best_return_eval,
               "length": result.report.length, "l0_ratio": float(np.mean(result.snapshot["p"])),
               "uncertainty": ps.uncertainty(result.snapshot["p"]), "seconds": result.seconds,
               "config_hash": trainer.cfg.hash(), "infix": result.report.infix}
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2))
