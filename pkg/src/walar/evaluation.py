"""Translation scoring and failure diagnostics."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import rankdata

from .env import gold_translate, sample_rollouts
from .qe import has_identical_halves
from .text import LanguageTag, TokenSentence, as_tag


# ---------------------------------------------------------------- BLEU

@dataclass(frozen=True)
class BleuScore:
    value: float
    precisions: tuple
    brevity_penalty: float
    sys_len: int
    ref_len: int


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyp: TokenSentence, refs, max_n: int = 4) -> BleuScore:
    """Sentence BLEU with clipped n-gram precision and brevity penalty.

    A zero match count at some order is smoothed to ``1 / (total + 1)``;
    nonzero counts are left alone. The reference length is the one closest
    to the hypothesis length (shorter wins ties).
    """
    refs = [r.tokens if isinstance(r, TokenSentence) else tuple(r) for r in refs]
    if not refs:
        raise ValueError("bleu needs at least one reference")
    h = hyp.tokens if isinstance(hyp, TokenSentence) else tuple(hyp)
    c = len(h)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    if c == 0:
        return BleuScore(0.0, (0.0,) * max_n, 0.0, 0, r)
    precisions = []
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(h, n)
        max_ref = Counter()
        for ref in refs:
            for g, k in _ngrams(ref, n).items():
                max_ref[g] = max(max_ref[g], k)
        matches = sum(min(k, max_ref[g]) for g, k in hyp_counts.items())
        total = max(c - n + 1, 0)
        if matches == 0:
            precisions.append(1.0 / (total + 1))
        else:
            precisions.append(matches / total)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    value = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuScore(min(value, 100.0), tuple(precisions), bp, c, r)


# ---------------------------------------------------------------- language consistency

@dataclass(frozen=True)
class LcrReport:
    rate: float
    counts: dict
    total: int


def lcr(outputs, tgt, lid) -> LcrReport:
    outputs = list(outputs)
    if not outputs:
        raise ValueError("LCR of an empty output list is undefined")
    tgt = as_tag(tgt)
    counts = Counter(lid.detect(y)[0].code for y in outputs)
    correct = sum(k for code, k in counts.items() if tgt == code)
    return LcrReport(correct / len(outputs), dict(sorted(counts.items())), len(outputs))


def penalized_score(raw: float, metric_min: float, detected_ok: bool) -> float:
    """Replace a wrong-language output's metric by the metric's minimum."""
    if raw < metric_min:
        raise ValueError(f"raw score {raw} below metric minimum {metric_min}")
    return raw if detected_ok else metric_min


# ---------------------------------------------------------------- failure taxonomy

class FailureLabel(Enum):
    OK = "ok"
    NON_TRANSLATION = "non_translation"
    SELF_GENERATED_REFERENCE = "self_generated_reference"
    OVER_TRANSLATION = "over_translation"
    UNDER_TRANSLATION = "under_translation"
    WRONG_LANGUAGE = "wrong_language"


def source_overlap(x: TokenSentence, y: TokenSentence) -> float:
    """Share of the hypothesis' distinct tokens that also occur in the source."""
    ys = set(y.tokens)
    return len(ys & set(x.tokens)) / len(ys) if ys else 0.0


def diagnose_failures(x, y, ref, tgt, lid, over_ratio: float = 1.5, under_ratio: float = 0.5, copy_overlap: float = 0.8) -> FailureLabel:
    """One label per hypothesis, checked in a fixed order.

    Wrong language first, then duplicated halves, then copying of the
    source, then length against the reference.
    """
    if len(ref) == 0:
        raise ValueError("reference must be nonempty")
    tgt = as_tag(tgt)
    if lid.detect(y)[0] != tgt:
        return FailureLabel.WRONG_LANGUAGE
    if has_identical_halves(y.tokens):
        return FailureLabel.SELF_GENERATED_REFERENCE
    if source_overlap(x, y) >= copy_overlap:
        return FailureLabel.NON_TRANSLATION
    ratio = len(y) / len(ref)
    if ratio > over_ratio:
        return FailureLabel.OVER_TRANSLATION
    if ratio < under_ratio:
        return FailureLabel.UNDER_TRANSLATION
    return FailureLabel.OK


def is_copy(x, y, copy_overlap: float = 0.8) -> bool:
    """Copy sub-flag; reported alongside WRONG_LANGUAGE, which outranks it."""
    return source_overlap(x, y) >= copy_overlap


# ---------------------------------------------------------------- pseudo references

@dataclass(frozen=True)
class PseudoRefSampling:
    num_candidates: int = 32
    min_p: float = 0.01
    temperature: float = 1.0


def select_pseudo_reference(candidates, rewards) -> int:
    candidates = list(candidates)
    rewards = list(rewards)
    if not candidates:
        raise ValueError("no candidates to select from")
    if len(candidates) != len(rewards):
        raise ValueError("candidates and rewards differ in length")
    return int(np.argmax(rewards))  # first maximum on ties


def min_p_policy(policy, min_p: float):
    """Copy of ``policy`` whose actions below ``min_p * max prob`` are cut off."""
    out = policy.copy()
    p = policy.probs()
    cut = p < min_p * p.max(axis=1, keepdims=True)
    logits = out.logits.copy()
    logits[cut] = logits.min() - 1e4
    out.set_logits(logits)
    return out


def pseudo_references(policy, prompts, rewarder, rng, cfg: PseudoRefSampling = PseudoRefSampling()):
    """Best-of-N hypothesis per prompt under ``rewarder``."""
    sampler = min_p_policy(policy, cfg.min_p) if cfg.min_p > 0 else policy
    out = []
    for x, tgt in prompts:
        group = sample_rollouts(sampler, (x, tgt), cfg.num_candidates, cfg.temperature, rng)
        hyps = [ro.hypothesis for ro in group.rollouts]
        rewards = [rewarder(x, y, tgt).total for y in hyps]
        out.append(hyps[select_pseudo_reference(hyps, rewards)])
    return out


# ---------------------------------------------------------------- rank aggregation

class MissingScoreError(KeyError):
    pass


def aggregate_ranks(scores: dict, higher_better: bool = True) -> dict:
    """Average rank per system over directions; tied systems share the mean rank."""
    systems = list(scores)
    directions = []
    for s in systems:
        for d in scores[s]:
            if d not in directions:
                directions.append(d)
    totals = np.zeros(len(systems))
    for d in directions:
        col = []
        for s in systems:
            if d not in scores[s]:
                raise MissingScoreError(f"no score for system {s!r} on direction {d!r}")
            col.append(float(scores[s][d]))
        col = np.asarray(col)
        totals += rankdata(-col if higher_better else col, method="average")
    n = max(len(directions), 1)
    return {s: float(t / n) for s, t in zip(systems, totals)}


# ---------------------------------------------------------------- policy evaluation

def _direction_label(x, tgt):
    return f"{x.lang.code}-{as_tag(tgt).code}"


def evaluate_policy(env, policy, prompts, lid, rewarder=None, rng=None, greedy: bool = False, over_ratio: float = 1.5, under_ratio: float = 0.5):
    """Decode one hypothesis per prompt and score it.

    Returns ``(records, summary)``; records are JSON-ready dicts in prompt order.
    """
    records = []
    for x, tgt in prompts:
        tgt = as_tag(tgt)
        ro = sample_rollouts(policy, (x, tgt), 1, rng=rng, greedy=greedy).rollouts[0]
        y = ro.hypothesis
        ref = gold_translate(env, x, tgt)
        detected, _ = lid.detect(y)
        label = diagnose_failures(x, y, ref, tgt, lid, over_ratio, under_ratio)
        gold_actions = np.array([env.token_index(env.lang_index(tgt), env.semantic_id(t)) for t in x.tokens])
        src = set(x.tokens)
        rec = {
            "direction": _direction_label(x, tgt),
            "source": x.text(),
            "hypothesis": y.text(),
            "reference": ref.text(),
            "bleu": bleu(y, [ref]).value,
            "detected": detected.code,
            "label": label.value,
            "copy": is_copy(x, y),
            "copied_tokens": sum(t in src for t in y.tokens),
            "hyp_len": len(y),
            "ref_len": len(ref),
            "dict_acc": float(np.mean(ro.position_actions == gold_actions)),
        }
        if rewarder is not None:
            rec["reward"] = rewarder(x, y, tgt).as_dict()
        records.append(rec)
    return records, summarize(records)


def summarize(records) -> dict:
    n = len(records)
    if n == 0:
        raise ValueError("nothing to summarize")
    labels = Counter(r["label"] for r in records)
    hyp_tokens = sum(r["hyp_len"] for r in records)
    ref_tokens = sum(r["ref_len"] for r in records)
    wrong = FailureLabel.WRONG_LANGUAGE.value
    nontr = FailureLabel.NON_TRANSLATION.value
    out = {
        "n": n,
        "dict_acc": float(np.mean([r["dict_acc"] for r in records])),
        "bleu": float(np.mean([r["bleu"] for r in records])),
        "lcr": sum(as_tag(r["detected"]) == r["direction"].split("-")[1] for r in records) / n,
        "copy_rate": (sum(r["copied_tokens"] for r in records) / hyp_tokens) if hyp_tokens else 0.0,
        "wrong_or_copy_rate": sum(r["label"] in (wrong, nontr) or r["copy"] for r in records) / n,
        "len_ratio": hyp_tokens / ref_tokens,
        "len_dev": float(np.mean([abs(r["hyp_len"] / r["ref_len"] - 1.0) for r in records])),
        "labels": {lab.value: labels.get(lab.value, 0) for lab in FailureLabel},
    }
    if records and "reward" in records[0]:
        out["mean_reward"] = float(np.mean([r["reward"]["total"] for r in records]))
    return out


def write_report(path, records, summary) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": summary}, sort_keys=True) + "\n")
