import json
import os

import pytest

from walar import cli
from walar.runner import (
    DEFAULT_ALPHAS,
    ConfigError,
    apply_env_overrides,
    read_prompts,
    run_experiment,
    sweep_alpha,
    validate_config,
)

TINY = {
    "version": 1,
    "env": {"num_langs": 3, "vocab_size": 10, "min_len": 2, "max_len": 4},
    "lid": {"lines_per_lang": 40},
    "grpo": {"total_steps": 3, "batch_prompts": 4},
    "directions": [[0, 1], [1, 2]],
    "heldout_directions": [[2, 0]],
    "eval": {"prompts": 12},
}


def test_defaults_filled():
    cfg = validate_config({"version": 1})
    assert cfg["reward"]["alpha"] == 20.0 and cfg["grpo"]["clip_epsilon"] == 0.2 and cfg["grpo"]["kl_beta"] == 0.01


@pytest.mark.parametrize(
    "raw",
    [
        {},
        {"version": 2},
        {"version": 1, "typo": 1},
        {"version": 1, "grpo": {"learning_rat": 1.0}},
        {"version": 1, "reward": {"mode": "bleu"}},
        {"version": 1, "directions": [[0, 0]]},
        {"version": 1, "directions": [[0, 9]]},
        {"version": 1, "directions": [[0, 1]], "heldout_directions": [[0, 1]]},
        {"version": 1, "lid": {"model": "/no/such/file.json"}},
        {"version": 1, "reward": {"qe": "remote"}},
        {"version": 1, "env": {"min_len": 5, "max_len": 3}},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        validate_config(raw)


def test_env_overrides():
    env = {"WALAR_GRPO__TOTAL_STEPS": "7", "WALAR_REWARD__MODE": "qe_la", "WALAR_SEED": "3", "OTHER": "x"}
    out = apply_env_overrides({"version": 1}, env)
    assert out == {"version": 1, "grpo": {"total_steps": 7}, "reward": {"mode": "qe_la"}, "seed": 3}


def listing(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_run_experiment_artifacts_deterministic(tmp_path):
    a = run_experiment(TINY, tmp_path / "a")
    b = run_experiment(TINY, tmp_path / "b")
    assert a == b
    fa, fb = listing(tmp_path / "a"), listing(tmp_path / "b")
    assert set(fa) == {
        "config.json", "eval_heldout_final.jsonl", "eval_heldout_initial.jsonl", "eval_train_final.jsonl",
        "eval_train_initial.jsonl", "lid.json", "manifest.json", "metrics.jsonl", "policy.npz",
        "prompts_heldout.tsv", "prompts_train.tsv", "summary.json",
    }
    for f in fa:
        if f != "manifest.json":
            assert fa[f] == fb[f], f
    ma, mb = json.loads(fa["manifest.json"]), json.loads(fb["manifest.json"])
    ma.pop("created"), mb.pop("created")
    assert ma == mb
    assert len(read_prompts(tmp_path / "a" / "prompts_heldout.tsv")) == 12
    assert all(p[0].lang == "L2" for p in read_prompts(tmp_path / "a" / "prompts_heldout.tsv"))


def test_seed_changes_results(tmp_path):
    a = run_experiment(TINY, tmp_path / "a")
    b = run_experiment({**TINY, "seed": 1}, tmp_path / "b")
    assert a != b


def test_zero_steps_evaluates_initial_only(tmp_path):
    cfg = {**TINY, "grpo": {"total_steps": 0}}
    s = run_experiment(cfg, tmp_path)
    assert "train_initial" in s and "train_final" not in s and s["steps"] == 0
    assert (tmp_path / "metrics.jsonl").read_text() == ""


def test_sweep_single_alpha_matches_run(tmp_path):
    rows = sweep_alpha(TINY, [20.0], tmp_path / "sw")
    single = run_experiment(TINY, tmp_path / "one")["train_final"]
    assert len(rows) == 1
    for k in ("bleu", "lcr", "mean_reward", "len_ratio", "len_dev", "dict_acc"):
        assert rows[0][k] == single[k]


def test_sweep_default_alphas_and_failure_isolation(tmp_path):
    rows = sweep_alpha({**TINY, "grpo": {"total_steps": 1, "batch_prompts": 2}}, [*DEFAULT_ALPHAS, -1], tmp_path)
    assert [r["alpha"] for r in rows] == [0, 5, 10, 15, 20, 25, -1]
    assert all(r["error"] is None for r in rows[:6])
    assert rows[6]["error"] and rows[6]["bleu"] is None
    table = (tmp_path / "alpha_sweep.tsv").read_text().splitlines()
    assert table[0].split("\t")[0] == "alpha" and len(table) == 8


def test_sweep_needs_alphas():
    with pytest.raises(ValueError):
        sweep_alpha(TINY, [])


# ---------------------------------------------------------------- CLI


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return p


def test_cli_train_eval_diagnose(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(out), "--seed", "2"]) == 0
    assert json.loads((out / "config.json").read_text())["seed"] == 2
    rep = tmp_path / "eval.jsonl"
    assert cli.main(["eval", "--model", str(out / "policy.npz"), "--testset", str(out / "prompts_train.tsv"), "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert len(lines) == 13 and "summary" in json.loads(lines[-1])

    diag = tmp_path / "d.tsv"
    diag.write_text("L0\tL1\tL0_w1 L0_w2\tL0_w1 L0_w2\tL1_w1 L1_w2\nL0\tL1\tL0_w1 L0_w2\tL1_w1 L1_w2\tL1_w1 L1_w2\n")
    dout = tmp_path / "d.jsonl"
    assert cli.main(["diagnose", "--input", str(diag), "--lid", str(out / "lid.json"), "--out", str(dout)]) == 0
    recs = [json.loads(l) for l in dout.read_text().splitlines()]
    assert [r["label"] for r in recs[:2]] == ["wrong_language", "ok"]


def test_cli_eval_rejects_unknown_tokens(tmp_path, tiny_config):
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
    bad = tmp_path / "bad.tsv"
    bad.write_text("L0\tL1\thello world\n")
    assert cli.main(["eval", "--model", str(out / "policy.npz"), "--testset", str(bad), "--out", str(tmp_path / "r")]) == 2


def test_cli_curate(tmp_path):
    test = " ".join(f"t{i}" for i in range(12))
    good = " ".join(f"g{i}" for i in range(15))
    (tmp_path / "train.tsv").write_text(f"English\t{test}\nEnglish\t{good}\n")
    (tmp_path / "test.tsv").write_text(f"English\t{test}\n")
    (tmp_path / "bands.tsv").write_text("English\t10\t50\n")
    rc = cli.main(["curate", "--train", str(tmp_path / "train.tsv"), "--test", str(tmp_path / "test.tsv"),
                   "--bands", str(tmp_path / "bands.tsv"), "--out", str(tmp_path / "cur")])
    assert rc == 0
    assert (tmp_path / "cur" / "kept.tsv").read_text() == f"English\t{good}\n"


def test_cli_lid_train(tmp_path, tiny_config):
    out = tmp_path / "lid.json"
    assert cli.main(["lid-train", "--config", str(tiny_config), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["languages"] == ["L0", "L1", "L2"]
    corpus = tmp_path / "c.tsv"
    corpus.write_text("aaa\tabc cab\nbbb\tpqr rqp\n")
    assert cli.main(["lid-train", "--corpus", str(corpus), "--out", str(out)]) == 0


def test_cli_exit_codes(tmp_path, tiny_config):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "nope": true}')
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["eval", "--model", "x"]) == 2
    (tmp_path / "c.tsv").write_text("no tab here\n")
    assert cli.main(["curate", "--train", str(tmp_path / "c.tsv"), "--test", str(tmp_path / "c.tsv"), "--bands", str(tmp_path / "c.tsv")]) == 2
    assert cli.main(["sweep-alpha", "--config", str(tiny_config), "--alphas", "20,-1", "--out", str(tmp_path / "sw")]) == 1
    assert cli.main(["sweep-alpha", "--config", str(tiny_config), "--alphas", "a,b"]) == 2


def test_cli_env_var_override(tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("WALAR_GRPO__TOTAL_STEPS", "0")
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["steps"] == 0
