import csv
import json

import pytest

from espl import cli


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def policy_txt(tmp_path):
    p = tmp_path / "policy.txt"
    p.write_text("17.17*s3 + 1.2*s4\n")
    return p


def test_unknown_env_is_config_error(capsys, tmp_path):
    code, _, err = _run(capsys, "train", "--env", "hopper", "--out", str(tmp_path / "x"))
    assert code == cli.EXIT_CONFIG and "hopper" in err


def test_bad_structure_is_config_error(capsys, tmp_path):
    code, _, _ = _run(capsys, "train", "--env", "pendulum", "--set", "structure=deep", "--out", str(tmp_path))
    assert code == cli.EXIT_CONFIG


def test_eval_rejects_nonpositive_episodes(capsys, policy_txt):
    code, _, _ = _run(capsys, "eval", str(policy_txt), "--env", "cartpole", "--episodes", "0")
    assert code == cli.EXIT_CONFIG


def test_eval_deterministic_csv(capsys, policy_txt, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        code, _, err = _run(capsys, "eval", str(policy_txt), "--env", "cartpole", "--episodes", "5",
                            "--out", str(tmp_path / name))
        assert code == cli.EXIT_OK and "mean" in err
        outs.append((tmp_path / name).read_text())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0].splitlines()))
    assert [r["episode"] for r in rows] == ["0", "1", "2", "3", "4"]
    assert all(float(r["return"]) == int(r["length"]) for r in rows)


def test_init_config_roundtrip(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    assert _run(capsys, "init-config", "--env", "pendulum", "--ci", "--out", str(path))[0] == cli.EXIT_OK
    doc = json.loads(path.read_text())
    assert doc["env"] == "pendulum" and doc["profile"] == "ci"
    args = cli.build_parser().parse_args(["train", "--config", str(path)])
    cfg = cli.build_train_config(args)
    assert cfg.to_dict() == doc


def test_meta_init_config(capsys):
    code, out, _ = _run(capsys, "init-config", "--meta", "--smoke")
    assert code == cli.EXIT_OK and json.loads(out)["n_train_tasks"] == 10


def test_train_writes_summary_and_extract_idempotent(capsys, tmp_path):
    out = tmp_path / "run"
    code, stdout, _ = _run(capsys, "train", "--env", "pendulum", "--iterations", "3", "--quiet",
                           "--set", "steps_per_iter=2", "--set", "min_fill=20", "--set", "batch_size=8",
                           "--set", "warmup_episodes=1", "--set", "final_eval_episodes=2", "--set", "eval_every=2",
                           "--set", "critic_hidden=[8,8]", "--set", "horizon=40", "--out", str(out))
    assert code == cli.EXIT_OK
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert len(rows) == 1 and rows[0]["best"] == "1"
    seed_dir = out / "seed0"
    before = (seed_dir / "policy.txt").read_text()
    assert _run(capsys, "extract", str(seed_dir / "checkpoint.npz"))[0] == cli.EXIT_OK
    first = (seed_dir / "policy.txt").read_text()
    assert _run(capsys, "extract", str(seed_dir / "checkpoint.npz"))[0] == cli.EXIT_OK
    assert (seed_dir / "policy.txt").read_text() == first == before


def test_check_flag_exit_code(capsys, tmp_path):
    code, _, _ = _run(capsys, "train", "--env", "pendulum", "--iterations", "1", "--quiet", "--check",
                      "--set", "steps_per_iter=1", "--set", "min_fill=20", "--set", "batch_size=8",
                      "--set", "warmup_episodes=1", "--set", "final_eval_episodes=1",
                      "--set", "critic_hidden=[8]", "--out", str(tmp_path / "r"))
    assert code == cli.EXIT_CHECK


def test_analyze_paper_gains(capsys):
    code, out, _ = _run(capsys, "analyze", "--gains", "17.17,1.2", "--fd")
    doc = json.loads(out)
    assert code == cli.EXIT_OK
    closed = sorted(doc["eigenvalues"], key=lambda e: e[1])
    assert closed[0][0] == pytest.approx(-26.34, abs=5e-2)
    assert abs(closed[0][1]) == pytest.approx(6.65014286, abs=5e-2)
    assert doc["fd_max_abs_diff"] < 1e-3


def test_analyze_policy_file(capsys, policy_txt):
    code, out, _ = _run(capsys, "analyze", str(policy_txt))
    assert code == cli.EXIT_OK and json.loads(out)["gain_source"] == "affine"


def test_analyze_needs_input(capsys):
    assert _run(capsys, "analyze")[0] == cli.EXIT_CONFIG
