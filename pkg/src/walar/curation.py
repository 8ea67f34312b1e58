"""Monolingual data filters: length bands, n-gram decontamination, entity ratio,
and baseline-score band selection of translation directions."""

from __future__ import annotations

import json
import os
import re
from collections import defaultdict
from dataclasses import dataclass

from .text import Corpus, LanguageTag, TokenSentence, as_tag, segment

DEFAULT_NGRAM = 8
COVERAGE_THRESHOLD = 0.70
ENTITY_RATIO_THRESHOLD = 0.60
DIRECTION_BAND = (1.0, 20.0)

# Per-language token ranges used for the real training data.
DEFAULT_LENGTH_BANDS = {
    "Arabic": (20, 80), "Bengali": (50, 250), "Bulgarian": (20, 140), "Chinese": (10, 150),
    "Czech": (20, 120), "Dutch": (20, 100), "English": (10, 50), "Finnish": (20, 100),
    "French": (10, 120), "German": (20, 90), "Hindi": (50, 230), "Hungarian": (20, 120),
    "Icelandic": (20, 110), "Indonesian": (10, 100), "Italian": (20, 100), "Macedonian": (30, 120),
    "Polish": (20, 100), "Portuguese": (20, 100), "Romanian": (20, 100), "Russian": (30, 180),
    "Spanish": (10, 100), "Turkish": (20, 80), "Ukrainian": (20, 150),
}


def count_tokens(sentence) -> int:
    return len(sentence)


class LengthBandTable(dict):
    """LanguageTag -> inclusive ``(min_tokens, max_tokens)``."""

    def __init__(self, bands=()):
        super().__init__()
        items = bands.items() if isinstance(bands, dict) else bands
        for lang, (lo, hi) in items:
            if lo < 0 or hi < lo:
                raise ValueError(f"bad band [{lo}, {hi}] for {lang}")
            self[as_tag(lang)] = (int(lo), int(hi))

    def __getitem__(self, lang):
        return super().__getitem__(as_tag(lang))

    def __contains__(self, lang):
        return super().__contains__(as_tag(lang))

    @classmethod
    def load(cls, path) -> "LengthBandTable":
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'lang<TAB>min<TAB>max'")
                rows.append((parts[0], (int(parts[1]), int(parts[2]))))
        return cls(rows)

    def dumps(self) -> str:
        return "".join(f"{lang.code}\t{lo}\t{hi}\n" for lang, (lo, hi) in self.items())


def length_filter(sentence: TokenSentence, table: LengthBandTable, tokenizer=count_tokens) -> bool:
    if sentence.lang not in table:
        raise KeyError(f"no length band for language {sentence.lang}")
    lo, hi = table[sentence.lang]
    return lo <= tokenizer(sentence) <= hi


# ---------------------------------------------------------------- decontamination

@dataclass(frozen=True)
class ContaminationEntry:
    index: int
    flagged: bool
    test_index: int | None
    longest_match: int
    coverage: float
    candidates: int

    def as_dict(self):
        return {
            "index": self.index,
            "flagged": self.flagged,
            "test_index": self.test_index,
            "longest_match": self.longest_match,
            "coverage": self.coverage,
            "candidates": self.candidates,
        }


class ContaminationReport(list):
    def flagged(self) -> list[int]:
        return [e.index for e in self if e.flagged]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in self:
                fh.write(json.dumps(e.as_dict(), sort_keys=True) + "\n")


def longest_common_run(a, b) -> int:
    """Length of the longest contiguous token run shared by ``a`` and ``b``."""
    best = 0
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
                if cur[j] > best:
                    best = cur[j]
        prev = cur
    return best


def _tokens(entry, tokenize):
    if isinstance(entry, TokenSentence):
        return entry.tokens
    lang, text = entry
    return tuple(tokenize(text, lang))


def _split(text, lang):
    return segment(text, lang).tokens


def decontaminate(train, test, n: int = DEFAULT_NGRAM, coverage_threshold: float = COVERAGE_THRESHOLD, tokenize=_split) -> ContaminationReport:
    """Flag training lines whose longest shared run covers too much of a test line.

    Only test lines sharing at least one ``n``-gram with the training line are
    compared. Coverage is measured against the test line's length and must
    strictly exceed ``coverage_threshold``.
    """
    if n < 1:
        raise ValueError("n-gram size must be >= 1")
    test_toks = [_tokens(e, tokenize) for e in test]
    index = defaultdict(set)
    for t, toks in enumerate(test_toks):
        for i in range(len(toks) - n + 1):
            index[toks[i : i + n]].add(t)
    report = ContaminationReport()
    for k, entry in enumerate(train):
        toks = _tokens(entry, tokenize)
        cands = set()
        for i in range(len(toks) - n + 1):
            cands |= index.get(toks[i : i + n], set())
        best_t, best_len, best_cov = None, 0, 0.0
        for t in sorted(cands):
            run = longest_common_run(toks, test_toks[t])
            cov = run / len(test_toks[t])
            if cov > best_cov:
                best_t, best_len, best_cov = t, run, cov
        report.append(
            ContaminationEntry(k, best_cov > coverage_threshold, best_t, best_len, best_cov, len(cands))
        )
    return report


# ---------------------------------------------------------------- entity ratio

def merge_spans(spans):
    """Merge overlapping or touching half-open ``(start, end)`` spans."""
    out = []
    for s, e in sorted((int(s), int(e)) for s, e in spans):
        if e <= s:
            continue
        if out and s <= out[-1][1]:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [tuple(p) for p in out]


def ner_ratio_filter(sentence: TokenSentence, entity_spans, threshold: float = ENTITY_RATIO_THRESHOLD) -> bool:
    """Keep unless entity tokens make up strictly more than ``threshold`` of the sentence."""
    n = len(sentence)
    spans = merge_spans(entity_spans)
    for s, e in spans:
        if s < 0 or e > n:
            raise ValueError(f"entity span {(s, e)} outside sentence of {n} tokens")
    if n == 0:
        return True
    covered = sum(e - s for s, e in spans)
    return not covered / n > threshold


_CAP = re.compile(r"^[A-Z][\w'-]*$")


def capitalized_runs(sentence: TokenSentence):
    """Stand-in recognizer: maximal runs of capitalized tokens, skipping a lone sentence-initial one."""
    spans = []
    toks = sentence.tokens
    i = 0
    while i < len(toks):
        if _CAP.match(toks[i]):
            j = i
            while j < len(toks) and _CAP.match(toks[j]):
                j += 1
            if not (i == 0 and j == 1):
                spans.append((i, j))
            i = j
        else:
            i += 1
    return spans


# ---------------------------------------------------------------- direction selection

@dataclass(frozen=True)
class DirectionScore:
    src: str
    tgt: str
    score: float
    selected: bool


def select_directions(baseline: dict, band=DIRECTION_BAND) -> list[DirectionScore]:
    """Keep directions whose baseline score lies in ``band`` (inclusive)."""
    lo, hi = band
    out = []
    for (src, tgt), score in baseline.items():
        if score < 0:
            raise ValueError(f"negative baseline score for {src}-{tgt}")
        out.append(DirectionScore(str(src), str(tgt), float(score), lo <= score <= hi))
    return out


# ---------------------------------------------------------------- pipeline

def curate(train: Corpus, test: Corpus, bands: LengthBandTable, recognizer=capitalized_runs, n: int = DEFAULT_NGRAM):
    """Apply decontamination, length and entity filters; returns ``(kept, report)``."""
    report = decontaminate(train, test, n)
    kept = []
    for (lang, text), entry in zip(train, report):
        s = segment(text, lang)
        if entry.flagged:
            continue
        if not length_filter(s, bands):
            continue
        if not ner_ratio_filter(s, recognizer(s)):
            continue
        kept.append((lang, text))
    return Corpus(tuple(kept)), report


def write_curated(out_dir, kept: Corpus, report: ContaminationReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "kept.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(kept.dumps())
    report.write(os.path.join(out_dir, "contamination.jsonl"))
