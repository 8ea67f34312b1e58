import numpy as np
import pytest

from walar.env import SynthEnv, gold_translate, synthetic_embedder
from walar.langid import PrefixLid
from walar.qe import QeScore
from walar.reward import RewardComponents, RewardConfig, Rewarder, walar_reward
from walar.text import TokenSentence

ENV = SynthEnv(num_langs=3, vocab_size=20, min_len=2, max_len=6)
LID = PrefixLid(ENV.languages)
EMB = synthetic_embedder(ENV, dim=16, scale=12)


def comps(qe=None, emb=EMB):
    return RewardComponents(ENV, LID, emb, qe)


def test_gate_dominates():
    x = ENV.sentence(0, [1, 2, 3])
    y = ENV.sentence(2, [1, 2, 3])  # perfect content, wrong language
    b = walar_reward(x, y, "L1", RewardConfig(), comps())
    assert b.r_la == 0 and b.total == -25.0
    assert b.r_qe == 0.0 and b.r_wa is not None  # diagnostics still recorded


def test_combination_example(monkeypatch):
    c = comps(qe=lambda r: QeScore(-5.0))
    monkeypatch.setattr(c, "score_wa", lambda *a: type("R", (), {"f1": 0.8})())
    x = ENV.sentence(0, [1, 2])
    b = walar_reward(x, ENV.sentence(1, [1, 2]), "L1", RewardConfig(alpha=20), c)
    assert b.total == pytest.approx(11.0, abs=1e-12)


def test_perfect_translation_is_twenty():
    x = ENV.sentence(0, [4, 5, 6, 7])
    b = walar_reward(x, gold_translate(ENV, x, "L2"), "L2", RewardConfig(), comps())
    assert (b.r_qe, b.r_wa, b.r_la, b.total) == (0.0, 1.0, 1, 20.0)


def test_mode_call_counters():
    x = ENV.sentence(0, [1, 2, 3])
    y = ENV.sentence(1, [1, 2])
    for mode, want in [("qe_only", {"qe": 1}), ("qe_la", {"qe": 1, "la": 1}), ("walar", {"qe": 1, "la": 1, "wa": 1})]:
        c = comps()
        walar_reward(x, y, "L1", RewardConfig(mode=mode), c)
        assert dict(c.calls) == want


def random_pair(rng):
    src = rng.choice(ENV.vocab_size, size=int(rng.integers(2, 7)), replace=False)
    x = ENV.sentence(int(rng.integers(3)), src)
    toks = [ENV.token(int(rng.integers(3)), int(rng.integers(ENV.vocab_size))) for _ in range(int(rng.integers(0, 9)))]
    tgt = ENV.lang(int(rng.integers(3)))
    return x, TokenSentence(tuple(toks), tgt), tgt


def test_ablation_equivalences():
    rng = np.random.default_rng(0)
    for _ in range(300):
        x, y, tgt = random_pair(rng)
        qe_la = walar_reward(x, y, tgt, RewardConfig(mode="qe_la"), comps()).total
        a0 = walar_reward(x, y, tgt, RewardConfig(mode="walar", alpha=0.0), comps()).total
        assert a0 == qe_la
        pure = walar_reward(x, y, tgt, RewardConfig(mode="walar", alpha=0.0, force_la=True), comps()).total
        assert pure == walar_reward(x, y, tgt, RewardConfig(mode="qe_only"), comps()).total


def test_monotone_in_r_wa(monkeypatch):
    x = ENV.sentence(0, [1, 2])
    y = ENV.sentence(1, [1, 2])
    totals = []
    for f in np.linspace(0, 1, 11):
        c = comps()
        monkeypatch.setattr(c, "score_wa", lambda *a, f=f: type("R", (), {"f1": f})())
        totals.append(walar_reward(x, y, "L1", RewardConfig(), c).total)
    assert all(b >= a for a, b in zip(totals, totals[1:]))


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(alpha=-1)
    with pytest.raises(ValueError):
        RewardConfig(mode="bleu")
    with pytest.raises(ValueError):
        RewardConfig(wa_threshold_c=1.0)


def test_rewarder_caches():
    c = comps()
    rw = Rewarder(RewardConfig(), c, cache_size=2)
    x = ENV.sentence(0, [1, 2])
    y = ENV.sentence(1, [1, 2])
    a = rw(x, y, "L1")
    b = rw(x, y, "l1")
    assert a is b and c.calls["qe"] == 1
    rw(x, ENV.sentence(1, [1]), "L1")
    rw(x, ENV.sentence(1, [2]), "L1")
    rw(x, y, "L1")  # evicted, recomputed
    assert c.calls["qe"] == 4


def test_copied_words_lower_alignment():
    x = ENV.sentence(0, [1, 2, 3, 4])
    clean = walar_reward(x, ENV.sentence(1, [1, 2, 3, 4]), "L1", RewardConfig(), comps())
    mixed_y = TokenSentence(("L1_w1", "L1_w2", "L1_w3", "L0_w4"), "L1")
    mixed = walar_reward(x, mixed_y, "L1", RewardConfig(), comps())
    assert mixed.masked_indices == {3}
    assert mixed.r_wa < clean.r_wa
    assert mixed.r_qe == clean.r_qe == 0.0  # QE sees raw y and is fooled
