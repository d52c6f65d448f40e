"""Acceptance checks, one test per criterion.

Each test records a single ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the terminal summary (see conftest.py).  Criteria 6 to 10 read the
artifacts that ``espl train`` / ``espl meta-train`` leave under the run
directory (``$ESPL_RUN_DIR`` or ``runs/``).  With ``ESPL_ACCEPTANCE_RETRAIN=1``
missing artifacts are produced first, which takes several CPU hours.
"""
import csv
import json
import math
import os
import time
from pathlib import Path

import numpy as np

from espl import autodiff as ad
from espl import cli
from espl import expression as ex
from espl import path_selector as ps
from espl import stability as stab
from espl import symbolic_ops as so
from espl.config import TrainerConfig
from espl.envs import CartPoleParams, env_spec
from espl.sac_trainer import SymbolicActor, TwinCritic, actor_objective, network_config_for
from espl.symbolic_network import STRUCTURES, NetworkConfig, SymbolicNetwork

RESULTS: dict[int, str] = {}
ROOT = Path(__file__).resolve().parents[1]


def record(n: int, ok: bool, detail: str):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def run_dir() -> Path:
    return Path(os.environ.get("ESPL_RUN_DIR", ROOT / "runs"))


# Commands that produce the artifacts each heavy criterion reads.
PRODUCERS = {
    "cartpole-full": ["train", "--env", "cartpole", "--seeds", "3", "--early-stop"],
    "cartpole-ci": ["train", "--env", "cartpole", "--ci", "--seeds", "3", "--early-stop"],
    "pendulum-full": ["train", "--env", "pendulum", "--seeds", "3", "--early-stop"],
    "ablation-pendulum-dense-arranged": ["train", "--env", "pendulum", "--ci", "--structure", "dense-arranged",
                                         "--seeds", "3"],
    "ablation-pendulum-plain": ["train", "--env", "pendulum", "--ci", "--structure", "plain", "--seeds", "3"],
    "meta-desk": ["meta-train", "--set", "iterations=200", "--set", "steps_per_iter=100",
                  "--set", "schedule_iters=100", "--set", "profile=desk"],
    "meta-smoke": ["meta-train", "--smoke"],
}


def artifact(name: str, filename: str) -> Path | None:
    path = run_dir() / name / filename
    if not path.exists() and os.environ.get("ESPL_ACCEPTANCE_RETRAIN") == "1":
        cli.main(PRODUCERS[name] + ["--quiet", "--out", str(run_dir() / name)])
    return path if path.exists() else None


def missing(n: int, name: str):
    record(n, False, f"no artifacts in {run_dir() / name}; run `espl {' '.join(PRODUCERS[name])}` "
                     "or set ESPL_ACCEPTANCE_RETRAIN=1")


def summary_rows(name: str) -> list[dict] | None:
    path = artifact(name, "summary.csv")
    if path is None:
        return None
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        seed_dir = Path(r["run_dir"])
        if not seed_dir.is_absolute() and not seed_dir.exists():
            seed_dir = path.parent / seed_dir.name
        r["summary"] = json.loads((seed_dir / "summary.json").read_text())
        r["config"] = json.loads((seed_dir / "config.json").read_text())
    return rows


def best(rows: list[dict]) -> dict:
    return max(rows, key=lambda r: r["summary"]["mean_return"])


# ---------------------------------------------------------------------------
# 1. gradients of the full actor loss
# ---------------------------------------------------------------------------

def _actor_gradient_errors(seed: int, n_coords: int = 20, h: float = 1e-4):
    """Relative errors on random coordinates plus the number skipped as kinks.

    The path-probability coordinates use the straight-through surrogate with the
    hard draw frozen: mask = hard(p0) + m_gs(p) - m_gs(p0), whose derivative in
    ``p`` is exactly what the ST estimator returns.  Finite differences use a
    Richardson step of ``h``; a coordinate whose Richardson value disagrees with
    a 1e-6 central difference sits within ``h`` of a kink (critic ReLU, clamp,
    min of twin Q) and is skipped rather than compared.
    """
    rng = np.random.default_rng(seed)
    actor = SymbolicActor(NetworkConfig.default(4, "dense-arranged"), 4, 1, (64, 64), rng)
    for net in actor.networks:
        for b in net.biases:
            b.value = rng.uniform(-0.3, 0.3, size=b.value.shape)
    actor.p.value = rng.uniform(0.05, 0.95, size=actor.n_weights)
    critic = TwinCritic(4, 1, (256, 256), rng, "float64")
    obs = rng.uniform(-1, 1, size=(16, 4)) * np.array([2.4, 2.0, 0.21, 2.0])
    eps = rng.normal(size=(16, 1))
    tau = float(rng.uniform(0.2, 1.0))
    noise = ps.gumbel_noise(actor.n_weights, rng)
    alpha, l_min = 0.2, 0.3 * actor.n_weights
    leaves = actor.symbolic_parameters() + [actor.p] + actor.std_net.parameters()

    with ad.Tape() as tape:
        loss, _ = actor_objective(actor, critic, obs, eps, ps.sample_mask_train(actor.p, tau, noise=noise),
                                  alpha, 1.0, 0.08, l_min)
    grads = tape.backward(loss, leaves)

    soft0 = ps.relaxed_mask(ad.constant(actor.p.value.copy()), tau, noise).value
    hard = (soft0 >= 0.5).astype(np.float64)

    def value():
        mask = ad.constant(hard - soft0) + ps.relaxed_mask(ad.constant(actor.p.value), tau, noise)
        return float(actor_objective(actor, critic, obs, eps, mask, alpha, 1.0, 0.08, l_min)[0].value)

    offsets = np.concatenate([[0], np.cumsum([leaf.value.size for leaf in leaves])])
    errors, kinks = [], 0
    for k in rng.choice(offsets[-1], size=n_coords, replace=False):
        i = int(np.searchsorted(offsets, k, side="right") - 1)
        j = int(k - offsets[i])
        flat = leaves[i].value.reshape(-1)

        def central(step):
            orig = flat[j]
            flat[j] = orig + step
            fp = value()
            flat[j] = orig - step
            fm = value()
            flat[j] = orig
            return (fp - fm) / (2 * step)

        rich = (4 * central(h / 2) - central(h)) / 3
        fine = central(1e-6)
        if abs(rich - fine) > 1e-6 * abs(fine) + 1e-9:
            kinks += 1
            continue
        g = float(grads[i].reshape(-1)[j])
        errors.append(abs(g - rich) / (abs(rich) + 1e-8))
    return errors, kinks, n_coords


def test_criterion_1_actor_loss_gradients():
    start = time.time()
    errors, kinks, total = [], 0, 0
    for seed in range(100):
        e, k, n = _actor_gradient_errors(seed)
        errors += e
        kinks += k
        total += n
    seconds = time.time() - start
    worst = max(errors)
    ok = worst < 1e-4 and kinks < 0.05 * total and seconds < 60
    record(1, ok, f"100 networks, max rel err {worst:.2e} over {len(errors)} coords "
                  f"({kinks} kink-adjacent skipped), {seconds:.1f}s")


# ---------------------------------------------------------------------------
# 2. operator golden values
# ---------------------------------------------------------------------------

BOUNDARIES = [0.01, 4.0, -10.0, 0.001, 100.0, -100.0, 0.0]


def _grid() -> np.ndarray:
    edges = [np.nextafter(v, d) for v in BOUNDARIES for d in (-np.inf, np.inf)]
    body = np.linspace(-150.0, 150.0, 10_000 - len(BOUNDARIES) - len(edges))
    return np.concatenate([body, BOUNDARIES, edges])


def _clip(v, lo, hi):
    return min(max(v, lo), hi)


def _golden(kind: str, a: np.ndarray, b: np.ndarray):
    """Piecewise rules applied element by element in plain Python floats."""
    if kind == "mul":
        out = [_clip(x, -100.0, 100.0) * _clip(y, -100.0, 100.0) for x, y in zip(a, b)]
        pen = [max(x - 100.0, 0.0) + max(-100.0 - x, 0.0) + max(y - 100.0, 0.0) + max(-100.0 - y, 0.0)
               for x, y in zip(a, b)]
        return np.array(out), np.array(pen)
    if kind == "div":
        out = [x / y if y >= 0.01 else 0.0 for x, y in zip(a, b)]
        return np.array(out), np.array([max(0.01 - y, 0.0) for y in b])
    if kind == "exp":
        # transcendental from the same numpy kernel; the rules decide its argument
        arg = np.array([_clip(x, -10.0, 4.0) for x in a])
        return np.exp(arg), np.array([max(x - 4.0, 0.0) + max(-10.0 - x, 0.0) for x in a])
    if kind == "log":
        arg = np.array([max(x, 0.001) for x in a])
        return np.log(arg), np.array([max(0.001 - x, 0.0) for x in a])
    raise KeyError(kind)


def test_criterion_2_operator_golden_values():
    grid = _grid()
    other = np.random.default_rng(0).permutation(grid)
    bad = []
    for kind in ("mul", "div", "exp", "log"):
        arity = so.OperatorKind.parse(kind).arity
        ins = [grid, other][:arity]
        want_out, want_pen = _golden(kind, grid, other)
        tape_out, tape_pen = so.apply(kind, *[ad.constant(x) for x in ins])
        val_out, val_pen = so.apply_values(kind, *ins)
        for label, got, want in (("tape", tape_out.value, want_out), ("tape penalty", tape_pen.value, want_pen),
                                 ("value", val_out, want_out), ("value penalty", val_pen, want_pen)):
            if not np.array_equal(got, want):
                bad.append(f"{kind} {label}: {int(np.sum(got != want))} mismatches")
    # the boundary points themselves
    spot = [so.apply_values("div", 1.0, 0.01)[0] == 1.0 / 0.01, so.apply_values("div", 1.0, 0.0099)[0] == 0.0,
            so.apply_values("exp", 4.0)[0] == np.exp(4.0), so.apply_values("exp", -10.0)[0] == np.exp(-10.0),
            so.apply_values("log", 0.001)[0] == np.log(0.001), so.apply_values("mul", 100.0, -100.0)[0] == -1e4,
            so.apply_values("mul", 101.0, 1.0)[1] == 1.0]
    if not all(spot):
        bad.append(f"boundary spot checks {spot}")
    record(2, not bad, f"{grid.size}-point grid incl. boundaries, bit-exact" if not bad else "; ".join(bad))


# ---------------------------------------------------------------------------
# 3. extraction fidelity
# ---------------------------------------------------------------------------

def test_criterion_3_extraction_fidelity():
    box = env_spec("cartpole")
    start = time.time()
    worst_extract = worst_simplify = 0.0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        structure = STRUCTURES[seed % len(STRUCTURES)]
        net = SymbolicNetwork(NetworkConfig.default(4, structure), rng)
        for w in net.weights:
            w.value = rng.uniform(-1.5, 1.5, size=w.value.shape)
        for b in net.biases:
            b.value = rng.uniform(-0.5, 0.5, size=b.value.shape)
        mask = (rng.uniform(size=net.n_weights) < rng.uniform(0.02, 0.6)).astype(np.float64)
        states = rng.uniform(box.box_low, box.box_high, size=(100, 4))
        masked = [w.value * m for w, m in zip(net.weights, net.split_mask(mask))]
        reference = net.forward_values(states, masked)[0]
        tree = ex.extract(net, mask)
        direct = ex.evaluate(tree, states)
        simple = ex.evaluate(ex.simplify(tree), states)
        worst_extract = max(worst_extract, float(np.max(np.abs(direct - reference))))
        worst_simplify = max(worst_simplify, float(np.max(np.abs(simple - direct))))
    seconds = time.time() - start
    ok = worst_extract < 1e-6 and worst_simplify < 1e-9 and seconds < 120
    record(3, ok, f"1000 pairs x 100 states: extract {worst_extract:.1e}, simplify {worst_simplify:.1e}, "
                  f"{seconds:.1f}s")


# ---------------------------------------------------------------------------
# 4. schedule endpoints
# ---------------------------------------------------------------------------

def test_criterion_4_schedule_endpoints():
    checks = []
    for env in ("cartpole", "pendulum", "mountaincar"):
        cfg = TrainerConfig.for_env(env)
        P = network_config_for(cfg, env_spec(env).obs_dim).n_weights
        start = ps.schedule(0, cfg.schedule_iters, cfg.target_temperature, cfg.l0_ratio, P)
        end = ps.schedule(cfg.schedule_iters, cfg.schedule_iters, cfg.target_temperature, cfg.l0_ratio, P)
        checks.append(start == (1.0, float(P)) and end == (0.2, cfg.l0_ratio * P))
    record(4, all(checks), f"start (1, P) and end (0.2, l_t*P) exact for cartpole/pendulum/mountaincar: {checks}")


# ---------------------------------------------------------------------------
# 5. stability numbers
# ---------------------------------------------------------------------------

def test_criterion_5_stability():
    params = CartPoleParams()
    open_eigs = stab.eigenvalues(stab.linearize([0.0, 0.0], params).A)
    reals = sorted(e.real for e in open_eigs)
    open_ok = (np.allclose(reals, [-3.97114593, 0.0, 0.0, 3.97114593], atol=5e-3)
               and all(abs(e.imag) < 5e-3 for e in open_eigs) and stab.classify(open_eigs) == "unstable")
    closed_eigs = stab.eigenvalues(stab.linearize([17.17, 1.2], params).A)
    poles = sorted((e for e in closed_eigs if abs(e) > 1e-9), key=lambda e: e.imag)
    closed_ok = (len(poles) == 2 and stab.classify(closed_eigs) == "stable"
                 and all(abs(e.real + 26.34) < 5e-2 for e in poles)
                 and abs(poles[0].imag + 6.65014286) < 5e-2 and abs(poles[1].imag - 6.65014286) < 5e-2)
    shown = ", ".join(f"{e.real:.4f}{e.imag:+.4f}j" for e in poles)
    record(5, open_ok and closed_ok, f"open loop {reals[0]:.5f}/{reals[-1]:.5f} ({stab.classify(open_eigs)}); "
                                     f"closed loop {shown} ({stab.classify(closed_eigs)})")


# ---------------------------------------------------------------------------
# 6 to 8. single-task training
# ---------------------------------------------------------------------------

def _training_ok(row: dict, threshold: float) -> tuple[bool, str]:
    s = row["summary"]
    ok = s["mean_return"] >= threshold and s["episodes_collected"] <= 500 and s["eval_episodes"] >= 100
    return ok, (f"seed {s['seed']}: {s['mean_return']:.2f} over {s['eval_episodes']} eps, "
                f"{s['episodes_collected']} episodes collected")


def test_criterion_6_cartpole():
    full, ci = summary_rows("cartpole-full"), summary_rows("cartpole-ci")
    if full is None:
        missing(6, "cartpole-full")
    if ci is None:
        missing(6, "cartpole-ci")
    ok_full, text_full = _training_ok(best(full), 995.0)
    ok_ci, text_ci = _training_ok(best(ci), 900.0)
    record(6, ok_full and ok_ci and len(full) <= 3 and len(ci) <= 3,
           f"full (>=995) best {text_full} [{'ok' if ok_full else 'miss'}]; "
           f"ci (>=900) best {text_ci} [{'ok' if ok_ci else 'miss'}]")


def test_criterion_7_pendulum():
    rows = summary_rows("pendulum-full")
    if rows is None:
        missing(7, "pendulum-full")
    ok, text = _training_ok(best(rows), -250.0)
    record(7, ok and len(rows) <= 3, f"best {text} (threshold -250)")


def test_criterion_8_sparsification():
    thresholds = {"cartpole-full": 995.0, "cartpole-ci": 900.0, "pendulum-full": -250.0}
    candidates = []
    for name, thr in thresholds.items():
        rows = summary_rows(name)
        if rows is None:
            missing(8, name)
        candidates += [(name, r, _training_ok(r, thr)[0]) for r in rows]
    passing = [(n, r) for n, r, ok in candidates if ok]
    judged = passing or [(n, r) for n, r, _ in candidates]
    bad, shown = [], []
    for name, r in judged:
        s, l_t = r["summary"], r["config"]["l0_ratio"]
        good = s["uncertainty"] >= 0.49 and s["l0_ratio"] <= 5 * l_t
        if name.startswith("cartpole"):
            good = good and s["length"] <= 8
        shown.append(f"{name}/seed{s['seed']}: u={s['uncertainty']:.4f} l0={s['l0_ratio']:.4f} "
                     f"(<= {5 * l_t:.3f}) len={s['length']:g}")
        if not good:
            bad.append(name)
    scope = "passing runs" if passing else "no passing run; judged all runs"
    record(8, bool(passing) and not bad, f"{scope}: " + "; ".join(shown))


# ---------------------------------------------------------------------------
# 9. meta-RL
# ---------------------------------------------------------------------------

def test_criterion_9_meta():
    desk, smoke = artifact("meta-desk", "meta_report.json"), artifact("meta-smoke", "meta_report.json")
    if desk is None:
        missing(9, "meta-desk")
    if smoke is None:
        missing(9, "meta-smoke")
    d, s = json.loads(desk.read_text()), json.loads(smoke.read_text())
    n_tasks = len(d["tasks"])
    ok_return = d["test_return"] >= 180.0
    ok_distinct = d["distinct_expressions"] >= 8 and n_tasks == 10
    ok_smoke = s["test_return"] >= 3 * s["random_return"]
    record(9, ok_return and ok_distinct and ok_smoke,
           f"adapted test return {d['test_return']:.1f} (>=180; prior {d['prior_return']:.1f}, "
           f"random {d['random_return']:.1f}); distinct {d['distinct_expressions']}/{n_tasks} (>=8); "
           f"smoke {s['test_return']:.1f} vs 3x random {3 * s['random_return']:.1f}")


# ---------------------------------------------------------------------------
# 10. ablation
# ---------------------------------------------------------------------------

def test_criterion_10_ablation():
    dense, plain = summary_rows("ablation-pendulum-dense-arranged"), summary_rows("ablation-pendulum-plain")
    if dense is None:
        missing(10, "ablation-pendulum-dense-arranged")
    if plain is None:
        missing(10, "ablation-pendulum-plain")
    same_budget = all(
        {k: v for k, v in a["config"].items() if k not in ("structure", "seed")}
        == {k: v for k, v in b["config"].items() if k not in ("structure", "seed")}
        for a in dense for b in plain)
    bd, bp = best(dense)["summary"]["mean_return"], best(plain)["summary"]["mean_return"]
    record(10, same_budget and bd >= bp - 30.0 and not math.isnan(bd),
           f"best of {len(dense)}/{len(plain)} seeds: dense-arranged {bd:.2f}, plain {bp:.2f} "
           f"(gate: dense >= plain - 30; identical budgets {same_budget})")
