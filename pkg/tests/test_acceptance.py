"""Acceptance criteria 1-12, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` (a PASS/FAIL line per
criterion is printed in the terminal summary) or directly with
``python3 tests/test_acceptance.py``. Criteria 7, 8, 9 and 12 train
desk-scale policies and take a few minutes on one CPU.
"""

import functools
import math
import os
import sys
import tempfile
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from test_alignment import brute_force  # independent O(m*n) oracle
from walar.alignment import TableEmbedder, alignment_f1, extract_alignment, similarity_matrices, word_alignment_score
from walar.curation import LengthBandTable, DEFAULT_LENGTH_BANDS, decontaminate, length_filter, ner_ratio_filter
from walar.env import RolloutGroup, SynthEnv, ToyPolicy, gen_prompt, sample_rollouts, synthetic_embedder
from walar.evaluation import bleu
from walar.grpo import GrpoConfig, TrainerState, compute_advantages, kl_k3, surrogate_objective
from walar.langid import train_ngram_lid
from walar.qe import Holes, holey_qe_score
from walar.reward import RewardComponents, RewardConfig, walar_reward
from walar.runner import run_experiment
from walar.text import Corpus, TokenSentence

RESULTS = {}
WORK = tempfile.mkdtemp(prefix="walar-acceptance-")


def record(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    return ok


# ---------------------------------------------------------------- 1, 2

_ROW_SUM_ERR = [0.0]


def _track(s):
    for mat in (s.sim_xy, s.sim_yx):
        _ROW_SUM_ERR[0] = max(_ROW_SUM_ERR[0], float(np.abs(mat.sum(1) - 1).max()))
    return s


def criterion_1():
    rng = np.random.default_rng(1001)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        m, n, d = int(rng.integers(1, 7)), int(rng.integers(1, 7)), int(rng.integers(1, 9))
        c = [1e-3, 0.1, 0.5][int(rng.integers(3))]
        scale = rng.uniform(0.3, 4.0)
        vocab = {f"x{i}": rng.normal(size=d) * scale for i in range(m)} | {f"y{j}": rng.normal(size=d) * scale for j in range(n)}
        emb = TableEmbedder(vocab)
        x = TokenSentence(tuple(f"x{i}" for i in range(m)), "a")
        y = TokenSentence(tuple(f"y{j}" for j in range(n)), "b")
        got = word_alignment_score(x, y, emb, c)
        _track(similarity_matrices([vocab[w] for w in x], [vocab[w] for w in y]))
        want, f1 = brute_force([vocab[w].tolist() for w in x], [vocab[w].tolist() for w in y], c)
        if set(got.pairs) != want or abs(got.f1 - f1) > 1e-15:
            mismatches += 1
    dt = time.perf_counter() - t0
    return record(1, mismatches == 0 and dt < 5, f"{mismatches} mismatches in 1000 instances, {dt:.2f}s (limit 5s)")


def criterion_2():
    if _ROW_SUM_ERR[0] == 0.0:
        criterion_1()
    rng = np.random.default_rng(2002)
    for _ in range(2000):
        hx = rng.normal(size=(int(rng.integers(1, 12)), 8)) * rng.uniform(0.1, 20)
        hy = rng.normal(size=(int(rng.integers(1, 12)), 8)) * rng.uniform(0.1, 20)
        _track(similarity_matrices(hx, hy))
    err = _ROW_SUM_ERR[0]
    return record(2, err <= 1e-9, f"max |row sum - 1| = {err:.2e} (limit 1e-9)")


# ---------------------------------------------------------------- 3

def criterion_3():
    env = SynthEnv()
    lid = train_ngram_lid(env.lid_corpus(200, np.random.default_rng(3)))
    comps = RewardComponents(env, lid, synthetic_embedder(env, dim=16, scale=12.0), lambda r: holey_qe_score(r, env, Holes()))
    cfg = RewardConfig(alpha=20.0)
    rng = np.random.default_rng(3003)
    bad, gated = 0, 0
    for _ in range(10_000):
        x, tgt = gen_prompt(env, rng)
        kind = rng.integers(4)
        if kind == 0:
            toks = list(x.tokens)
        else:
            toks = [env.token(int(rng.integers(env.num_langs)) if kind == 1 else env.lang_index(tgt), int(rng.integers(env.vocab_size)))
                    for _ in range(int(rng.integers(0, 12)))]
        y = TokenSentence(tuple(toks), tgt)
        b = walar_reward(x, y, tgt, cfg, comps)
        if b.r_la == 0:
            gated += 1
            bad += b.total != -25.0
        else:
            bad += abs(b.total - (b.r_qe + cfg.alpha * b.r_wa)) > 1e-12
    return record(3, bad == 0 and 0 < gated < 10_000, f"{bad} violations in 10000 triples ({gated} gated)")


# ---------------------------------------------------------------- 4

def _fd_rel_error(state, g, cfg, h=1e-5):
    _, grad = surrogate_objective(g, state, cfg)
    base = state.policy.logits.copy()
    num = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        for sgn in (1, -1):
            lg = base.copy()
            lg[idx] += sgn * h
            state.policy.set_logits(lg)
            num[idx] += sgn * surrogate_objective(g, state, cfg)[0]
    state.policy.set_logits(base)
    num /= 2 * h
    return np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12)


def criterion_4():
    env = SynthEnv(num_langs=2, vocab_size=3, min_len=1, max_len=2)
    rng = np.random.default_rng(4004)
    shape = ToyPolicy(env).logits.shape
    t0 = time.perf_counter()
    worst, done = 0.0, 0
    while done < 100:
        pol = ToyPolicy(env, rng.normal(size=shape))
        old = ToyPolicy(env, pol.logits + 0.15 * rng.normal(size=shape))
        ref = ToyPolicy(env, pol.logits + 0.3 * rng.normal(size=shape))
        prompt = gen_prompt(env, rng)
        g = sample_rollouts(old, prompt, 4, rng=rng)
        g.advantages = list(rng.normal(size=4))
        cfg = GrpoConfig(kl_beta=float(rng.uniform(0, 0.2)))
        lp, lpo = pol.log_probs(), old.log_probs()
        rhos = [math.exp(lp[r.contexts, r.actions].sum() - lpo[r.contexts, r.actions].sum()) for r in g.rollouts]
        if any(min(abs(r - 0.8), abs(r - 1.2)) < 0.01 for r in rhos):
            continue
        worst = max(worst, _fd_rel_error(TrainerState(pol, old, ref), g, cfg))
        done += 1
    dt = time.perf_counter() - t0
    return record(4, worst < 1e-5 and dt < 60, f"worst relative error {worst:.2e} (limit 1e-5) over 100 groups, {dt:.1f}s (limit 60s)")


# ---------------------------------------------------------------- 5, 6

def criterion_5():
    r = np.exp(np.random.default_rng(5005).uniform(math.log(1e-3), math.log(1e3), 100_000))
    nonneg = bool(np.all(kl_k3(r) >= 0))
    at_one = kl_k3(1.0) == 0.0
    # [PAPER] k3(2) = 2 - ln 2 - 1 ~ 0.3069; [DERIVED] closed form to 1e-9
    at_two = abs(kl_k3(2.0) - (2 - math.log(2) - 1)) <= 1e-9 and round(kl_k3(2.0), 4) == 0.3069
    return record(5, nonneg and at_one and at_two, f"nonnegative={nonneg}, k3(1)==0: {at_one}, k3(2)={kl_k3(2.0):.10f}")


def criterion_6():
    rng = np.random.default_rng(6006)
    worst_mean, worst_std, degenerate_ok = 0.0, 0.0, True
    for _ in range(10_000):
        G = int(rng.integers(2, 17))
        if rng.random() < 0.1:
            a = compute_advantages(np.full(G, rng.normal() * 10))
            degenerate_ok &= bool(np.all(a == 0))
            continue
        r = rng.normal(size=G) * 10 ** rng.uniform(-3, 2) + rng.normal() * 20
        a = compute_advantages(r)
        worst_mean = max(worst_mean, abs(a.mean()))
        worst_std = max(worst_std, abs(a.std() - 1))
    ok = worst_mean <= 1e-9 and worst_std <= 1e-6 and degenerate_ok
    return record(6, ok, f"max |mean| {worst_mean:.1e}, max |std-1| {worst_std:.1e}, degenerate groups zeroed: {degenerate_ok}")


# ---------------------------------------------------------------- desk-scale runs

DESK = {"version": 1}  # defaults are the desk-scale setup: K=4, W=50, 4 directions, G=8, eps=0.2, beta=0.01, 500 steps


@functools.lru_cache(maxsize=None)
def desk_run(mode="walar", seed=0, alpha=20.0, tag=""):
    cfg = {**DESK, "seed": seed, "reward": {"mode": mode, "alpha": alpha}}
    out = os.path.join(WORK, f"{mode}_{alpha:g}_{seed}{tag}")
    t0 = time.perf_counter()
    summary = run_experiment(cfg, out)
    return summary, out, time.perf_counter() - t0


def criterion_7():
    qo, _, t1 = desk_run("qe_only")
    ql, _, t2 = desk_run("qe_la")
    wa, _, t3 = desk_run("walar")
    a = qo["train_final"]["wrong_or_copy_rate"] >= 0.80
    b = ql["train_final"]["lcr"] >= 0.95 and ql["train_final"]["len_dev"] >= 0.25
    w = wa["train_final"]
    c = w["dict_acc"] >= 0.90 and w["lcr"] >= 0.98 and w["copy_rate"] <= 0.05 and w["len_dev"] <= 0.10
    within = max(t1, t2, t3) <= 30 * 60
    detail = (
        f"(a) wrong-or-copy {qo['train_final']['wrong_or_copy_rate']:.3f}>=0.80 {a}; "
        f"(b) LCR {ql['train_final']['lcr']:.3f}>=0.95, len dev {ql['train_final']['len_dev']:.3f}>=0.25 {b}; "
        f"(c) dict acc {w['dict_acc']:.3f}, LCR {w['lcr']:.3f}, copy {w['copy_rate']:.3f}, len dev {w['len_dev']:.3f} {c}; "
        f"steps {wa['steps']}, slowest run {max(t1, t2, t3):.0f}s"
    )
    return record(7, a and b and c and within, detail)


def criterion_8():
    wins, devs = 0, []
    for seed in range(5):
        d0 = desk_run("walar", seed, 0.0)[0]["train_final"]["len_dev"]
        d20 = desk_run("walar", seed, 20.0)[0]["train_final"]["len_dev"]
        wins += d20 < d0
        devs.append(f"{d20:.3f}<{d0:.3f}")
    return record(8, wins >= 4, f"alpha=20 strictly smaller length deviation in {wins}/5 seeds ({', '.join(devs)})")


def criterion_9():
    cfg = {**DESK, "env": {"num_langs": 5}, "directions": [[0, 4], [1, 4], [2, 4]], "heldout_directions": [[3, 4]]}
    s = run_experiment(cfg, os.path.join(WORK, "heldout"))
    before, after = s["heldout_initial"]["dict_acc"], s["heldout_final"]["dict_acc"]
    return record(9, after - before >= 0.3, f"held-out L3->L4 dict acc {before:.3f} -> {after:.3f} (gain {after - before:+.3f}, need +0.3)")


# ---------------------------------------------------------------- 10, 11

def criterion_10():
    def words(n):
        return [f"t{i}" for i in range(n)]

    # [PAPER] thresholds: coverage > 0.7, entity ratio > 0.6, English band [10, 50]
    checks = {}
    test = words(1000)
    for run, want in ((701, True), (700, False)):
        train = ["x"] + test[:run] + ["y"]
        rep = decontaminate(Corpus((("English", " ".join(train)),)), Corpus((("English", " ".join(test)),)))
        checks[f"coverage {run / 1000:.3f}"] = rep[0].flagged is want
    s = TokenSentence(tuple(words(1000)), "English")
    checks["entities 0.601 dropped"] = ner_ratio_filter(s, [(0, 601)]) is False
    checks["entities 0.600 kept"] = ner_ratio_filter(s, [(0, 600)]) is True
    bands = LengthBandTable(DEFAULT_LENGTH_BANDS)
    for n, want in ((9, False), (10, True), (50, True), (51, False)):
        checks[f"length {n}"] = length_filter(TokenSentence(tuple(words(n)), "English"), bands) is want
    failed = [k for k, v in checks.items() if not v]
    return record(10, not failed, "all boundaries exact" if not failed else f"failed: {failed}")


# [DERIVED] expected scores worked out by hand from clipped n-gram counts
BLEU_FIXTURES = [
    ("a b c d", ["a b c e"], 100 * (3 / 4 * 2 / 3 * 1 / 2 * 1 / 2) ** 0.25),
    ("a b c d e f", ["a b c d e f g h"], 100 * math.exp(1 - 8 / 6)),
    ("the the the the", ["the cat"], 100 * (1 / 4 * 1 / 4 * 1 / 3 * 1 / 2) ** 0.25),
    ("a b c d e", ["a b c d x", "b c d e"], 100.0),
    ("a x b y", ["a b x y"], 100 * (1 * 1 / 4 * 1 / 3 * 1 / 2) ** 0.25),
]


def criterion_11():
    def s(t):
        return TokenSentence(tuple(t.split()), "x")

    bad = [h for h, refs, want in BLEU_FIXTURES if round(bleu(s(h), [s(r) for r in refs]).value, 4) != round(want, 4)]
    ident = bleu(s("a b c d e"), [s("a b c d e")]).value == 100.0
    empty = bleu(s(""), [s("a b c d")]).value == 0.0
    return record(11, not bad and ident and empty, f"{5 - len(bad)}/5 fixtures match to 4 dp; identity 100: {ident}; empty 0: {empty}")


# ---------------------------------------------------------------- 12

def criterion_12():
    _, a, _ = desk_run("walar", 0, 20.0)
    _, b, _ = desk_run("walar", 0, 20.0, tag="_repeat")
    la = open(os.path.join(a, "metrics.jsonl"), "rb").read()
    lb = open(os.path.join(b, "metrics.jsonl"), "rb").read()
    same = la == lb and len(la) > 0
    steps = la.count(b"\n")
    return record(12, same, f"metrics logs byte-identical: {same} ({len(la)} bytes, {steps} steps)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("check", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 13)])
def test_acceptance(check):
    ok = check()
    n = CRITERIA.index(check) + 1
    assert ok, f"criterion {n}: {RESULTS[n][1]}"


def summary_lines():
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for check in CRITERIA:
        check()
        n = CRITERIA.index(check) + 1
        ok, detail = RESULTS[n]
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
