"""``espl`` command-line interface.

Exit codes: 0 success, 2 configuration/usage error, 3 numeric divergence,
4 threshold failure under ``--check``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import expression as ex
from .config import ConfigError, TrainerConfig, load_json
from .envs import CartPoleParams, UnsupportedEnvError, canonical_kind, default_params, evaluate_batch
from .sac_trainer import TrainingDiverged
from .stability import StabilityError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CHECK = 0, 2, 3, 4

# mean-return thresholds used by ``train --check``
THRESHOLDS = {("cartpole", "full"): 995.0, ("cartpole", "ci"): 900.0,
              ("pendulum", "full"): -250.0, ("pendulum", "ci"): -250.0}

SELECTOR_ALIASES = {"l0": "gumbel", "gumbel": "gumbel", "l1": "l1", "none": "none"}

SUMMARY_COLUMNS = ["env", "structure", "selector", "seed", "mean_return", "std_return", "length",
                   "l0_ratio", "uncertainty", "episodes_collected", "run_dir"]


def run_root() -> Path:
    return Path(os.environ.get("ESPL_RUN_DIR", "runs"))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def build_train_config(args) -> TrainerConfig:
    base = load_json(args.config) if args.config else {}
    env = args.env or base.pop("env", None) or "cartpole"
    base.pop("env", None)
    ci = args.ci or base.get("profile") == "ci"
    flags = {}
    if args.structure:
        flags["structure"] = args.structure
    if args.selector:
        if args.selector not in SELECTOR_ALIASES:
            raise ConfigError(f"selector must be one of l0, l1, none; got {args.selector!r}")
        flags["selector"] = SELECTOR_ALIASES[args.selector]
    if args.iterations:
        flags["iterations"] = args.iterations
    merged = {**base, **flags, **_overrides(args.set)}
    try:
        return TrainerConfig.for_env(env, ci=ci, **merged)
    except TypeError as exc:
        raise ConfigError(f"invalid config field: {exc}") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .sac_trainer import Trainer

    cfg = build_train_config(args)
    seeds = args.seed_list or list(range(cfg.seed, cfg.seed + args.seeds))
    out = Path(args.out) if args.out else run_root() / f"{cfg.env}-{cfg.structure}-{cfg.selector}-{cfg.profile}"
    out.mkdir(parents=True, exist_ok=True)
    threshold = THRESHOLDS.get((cfg.env, cfg.profile))
    rows = []
    for seed in seeds:
        run_cfg = replace(cfg, seed=seed)
        run_dir = out / f"seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(run_cfg.to_dict(), indent=2))

        def progress(row):
            if not args.quiet and (row["iter"] + 1) % 10 == 0:
                print(f"[seed {seed}] iter {row['iter'] + 1} eval {row['return_eval']} "
                      f"l0 {row['l0_ratio']:.4f}", file=sys.stderr, flush=True)

        result = Trainer(run_cfg, run_dir).train(progress)
        summary = json.loads((run_dir / "summary.json").read_text())
        rows.append({**{k: summary.get(k) for k in SUMMARY_COLUMNS}, "selector": run_cfg.selector,
                     "run_dir": str(run_dir)})
        print(f"seed {seed}: mean return {result.mean_return:.2f}  length {result.report.length:g}  "
              f"{' | '.join(result.report.infix)}")
        if args.early_stop and threshold is not None and result.mean_return >= threshold:
            break
    best = max(rows, key=lambda r: r["mean_return"])
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS + ["best"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "best": int(r is best)})
    print(f"{'Environment':<14}{'Method':<24}{'Return':>12}{'Length':>8}")
    method = f"ESPL[{cfg.structure},{cfg.selector}]"
    print(f"{cfg.env:<14}{method:<24}{best['mean_return']:>12.2f}{best['length']:>8g}")
    if args.check and threshold is not None and best["mean_return"] < threshold:
        print(f"check failed: best mean return {best['mean_return']:.2f} < {threshold}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def load_policy(path: str | Path) -> tuple[list, dict]:
    """Trees plus metadata from a checkpoint, policy.json or policy.txt."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path} not found")
    if path.suffix == ".npz":
        from .sac_trainer import Trainer, policy_pipeline

        trainer = Trainer.from_checkpoint(path)
        report = policy_pipeline(trainer.actor.networks, trainer.deterministic_mask(), trainer.kind,
                                 provenance={"checkpoint": str(path), "config_hash": trainer.cfg.hash()})
        return report.trees, {"env": trainer.kind, "report": report}
    text = path.read_text()
    if path.suffix == ".json":
        doc = json.loads(text)
        report = ex.PolicyReport.from_dict(doc)
        return report.trees, {"env": doc.get("provenance", {}).get("env"), "report": report}
    trees = ex.parse(text, "infix")
    return trees, {"env": None, "report": ex.metrics(trees)}


def _env_params(kind: str, args):
    params = default_params(kind)
    changes = {k: getattr(args, k) for k in ("f", "m", "M", "L", "g") if getattr(args, k, None) is not None}
    if changes:
        if not isinstance(params, CartPoleParams):
            raise ConfigError("--f/--m/--M/--L/--g apply to cartpole only")
        params = replace(params, **changes)
    return params


def cmd_eval(args) -> int:
    if args.episodes <= 0:
        raise ConfigError("episodes must be positive")
    trees, meta = load_policy(args.policy)
    kind = canonical_kind(args.env or meta["env"] or "cartpole")
    seeds = [args.seed_base + i for i in range(args.episodes)]
    returns, lengths = evaluate_batch(kind, ex.ExpressionPolicy(trees), seeds, _env_params(kind, args), args.horizon)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["episode", "seed", "return", "length"])
        for i, (s, r, n) in enumerate(zip(seeds, returns, lengths)):
            w.writerow([i, s, repr(float(r)), int(n)])
    finally:
        if args.out:
            fh.close()
    print(f"mean {np.mean(returns):.4f} std {np.std(returns):.4f} over {len(returns)} episodes", file=sys.stderr)
    return EXIT_OK


def cmd_extract(args) -> int:
    trees, meta = load_policy(args.checkpoint)
    report = meta["report"]
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    doc = report.to_dict()
    doc["provenance"].setdefault("env", meta["env"])
    (out / "policy.json").write_text(json.dumps(doc, indent=2))
    (out / "policy.txt").write_text(ex.serialize(report.trees, "infix") + "\n")
    for i, (s, c) in enumerate(zip(report.infix, report.counts)):
        print(f"a{i + 1} = {s}")
        print(f"   operators {c[0]}  constants {c[1]}  variables {c[2]}")
    print(f"length {report.length:g}")
    return EXIT_OK


def _meta_config(args):
    from .meta_csp import MetaConfig

    base = load_json(args.config) if args.config else {}
    merged = {**base, **_overrides(args.set)}
    try:
        return MetaConfig.smoke(**merged) if args.smoke else MetaConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"invalid meta config field: {exc}") from None


def cmd_meta_train(args) -> int:
    from .meta_csp import MetaTrainer, distinct_expressions, random_policy_return

    cfg = _meta_config(args)
    out = Path(args.out) if args.out else run_root() / f"meta-{cfg.profile}-seed{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    trainer = MetaTrainer(cfg, out)

    def progress(row):
        if not args.quiet:
            print(f"iter {row['iter'] + 1} train {row['return_train']:.1f} test {row['return_test']}",
                  file=sys.stderr, flush=True)

    trainer.train(progress)
    results = trainer.evaluate_tasks(trainer.test_tasks, eval_episodes=args.eval_episodes, seed=10_000)
    baseline = random_policy_return(cfg.env, trainer.test_tasks, args.eval_episodes)
    prior = []
    for i, task in enumerate(trainer.test_tasks):
        res = trainer.adapt(task, episodes=0, seed=20_000 + i, eval_episodes=args.eval_episodes)
        prior.append(res.mean_return)
    report = {"test_return": float(np.mean([r.mean_return for r in results])),
              "prior_return": float(np.mean(prior)), "random_return": baseline,
              "distinct_expressions": distinct_expressions(results),
              "tasks": [{"task": vars(r.task), "return": r.mean_return, "infix": r.report.infix,
                         "length": r.report.length, "z": r.z.tolist()} for r in results]}
    (out / "meta_report.json").write_text(json.dumps(report, indent=2))
    print(f"test return {report['test_return']:.2f}  prior {report['prior_return']:.2f}  "
          f"random {baseline:.2f}  distinct {report['distinct_expressions']}/{len(results)}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    from .meta_csp import MetaTrainer

    trainer = MetaTrainer.from_checkpoint(args.checkpoint)
    task = replace(CartPoleParams(f=10.0), **{k: getattr(args, k) for k in ("f", "L") if getattr(args, k) is not None})
    res = trainer.adapt(task, episodes=args.episodes, seed=args.seed, eval_episodes=args.eval_episodes)
    doc = res.report.to_dict()
    doc["z"] = res.z.tolist()
    doc["mean_return"] = res.mean_return if args.eval_episodes else None
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(f"task f={task.f:g} L={task.L:g}: {' | '.join(res.report.infix)}")
    if args.eval_episodes:
        print(f"mean return {res.mean_return:.2f}")
    return EXIT_OK


def _grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ConfigError(f"grid must be lo:hi:n, got {text!r}") from None


def cmd_sweep(args) -> int:
    from .meta_csp import MetaTrainer, sweep

    trainer = MetaTrainer.from_checkpoint(args.checkpoint)
    rows = sweep(trainer, _grid(args.forces), _grid(args.lengths), args.episodes, args.seed)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .stability import analyze, eigenvalues, gains_from_tree, linearize_fd

    if args.gains:
        gains = [float(v) for v in args.gains.split(",")]
        offset, how = args.offset, "given"
    elif args.policy:
        trees, _ = load_policy(args.policy)
        gains, offset, how = gains_from_tree(trees[0])
    else:
        raise ConfigError("analyze needs a policy file or --gains")
    params = _env_params("cartpole", args)
    report = analyze(gains, params, offset)
    report["gain_source"] = how
    if args.fd:
        J = linearize_fd(report["gains"], params, offset)
        report["fd_eigenvalues"] = [[e.real, e.imag] for e in eigenvalues(J)]
        report["fd_max_abs_diff"] = float(np.max(np.abs(J - np.array(report["A"]))))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_init_config(args) -> int:
    if args.meta:
        from .meta_csp import MetaConfig

        doc = (MetaConfig.smoke() if args.smoke else MetaConfig()).to_dict()
    else:
        doc = TrainerConfig.for_env(args.env or "cartpole", ci=args.ci).to_dict()
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_params(p):
    for name in ("f", "m", "M", "L", "g"):
        p.add_argument(f"--{name}", type=float, default=None, help=f"cartpole parameter {name}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="espl", description="Symbolic policy learning for classic control")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train single-task symbolic policies (best of N seeds)")
    p.add_argument("--env")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--seed-list", type=int, nargs="+", help="explicit seeds")
    p.add_argument("--structure", choices=["plain", "dense", "dense-arranged"])
    p.add_argument("--selector", help="l0, l1 or none")
    p.add_argument("--iterations", type=int)
    p.add_argument("--ci", action="store_true", help="reduced profile")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")
    p.add_argument("--out")
    p.add_argument("--check", action="store_true", help="exit 4 if the best return misses the threshold")
    p.add_argument("--early-stop", action="store_true", help="stop at the first seed meeting the threshold")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or policy file")
    p.add_argument("policy")
    p.add_argument("--env")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed-base", type=int, default=1_000_000)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out")
    _add_params(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract", help="extract the symbolic policy from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("meta-train", help="train contextual symbolic policies on cartpole-fl")
    p.add_argument("--config")
    p.add_argument("--smoke", action="store_true")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--eval-episodes", type=int, default=10)
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("adapt", help="adapt a meta checkpoint to one task")
    p.add_argument("checkpoint")
    p.add_argument("--f", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--episodes", type=int, default=2, help="context episodes (0 = prior)")
    p.add_argument("--eval-episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("sweep", help="coefficient grid over force magnitude and pole length")
    p.add_argument("checkpoint")
    p.add_argument("--forces", default="5:15:5")
    p.add_argument("--lengths", default="0.3:0.9:4")
    p.add_argument("--episodes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="linear stability of a cartpole policy")
    p.add_argument("policy", nargs="?")
    p.add_argument("--gains", help="comma separated (k_theta,k_theta_dot) or 4 gains over (x, x_dot, theta, theta_dot)")
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--fd", action="store_true", help="also linearize the simulator by finite differences")
    _add_params(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("init-config", help="print a config with every default filled in")
    p.add_argument("--env")
    p.add_argument("--ci", action="store_true")
    p.add_argument("--meta", action="store_true")
    p.add_argument("--smoke", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, UnsupportedEnvError, StabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
