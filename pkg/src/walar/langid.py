"""Character n-gram language identification and code-switch masking.

The identifier scores each word by the smoothed log-probability of its
boundary-padded character n-grams under every language; a sentence score is
the sum of its word scores, so per-word results are cached.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .text import UNDETERMINED, Corpus, LanguageTag, TokenSentence, as_tag, segment

LID_FORMAT = "walar-lid"
LID_VERSION = 1
DEFAULT_WORD_THRESHOLD = 0.5
GATES = ("both", "masked", "raw")


def char_ngrams(word: str, lo: int, hi: int):
    padded = f"<{word}>"
    for n in range(lo, hi + 1):
        for i in range(len(padded) - n + 1):
            yield n, padded[i : i + n]


def _posterior(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max()
    e = np.exp(z)
    return e / e.sum()


class _LidBase:
    """Shared detection logic; subclasses provide ``word_logscores``."""

    languages: list

    def __init__(self):
        self._cache: dict[str, np.ndarray] = {}

    def word_logscores(self, word: str) -> np.ndarray:
        v = self._cache.get(word)
        if v is None:
            v = self._cache[word] = self._word_logscores(word)
        return v

    def classify_word(self, word: str) -> tuple[LanguageTag, float]:
        post = _posterior(self.word_logscores(word))
        k = int(np.argmax(post))
        return self.languages[k], float(post[k])

    def detect(self, sentence) -> tuple[LanguageTag, float]:
        tokens = sentence.tokens if isinstance(sentence, TokenSentence) else tuple(sentence)
        if not tokens:
            return UNDETERMINED, 0.0
        total = np.zeros(len(self.languages))
        for w in tokens:
            total += self.word_logscores(w)
        post = _posterior(total)
        k = int(np.argmax(post))  # first maximum wins: language-list order
        return self.languages[k], float(post[k])


class LidModel(_LidBase):
    def __init__(self, order_lo: int, order_hi: int, languages, counts, smoothing: float = 1.0):
        super().__init__()
        if not 1 <= order_lo <= order_hi:
            raise ValueError(f"bad n-gram order range {order_lo}..{order_hi}")
        if smoothing <= 0:
            raise ValueError("smoothing must be positive")
        self.order_lo = order_lo
        self.order_hi = order_hi
        self.smoothing = float(smoothing)
        self.languages = [as_tag(l) for l in languages]
        # counts[lang_index][order] -> Counter
        self.counts = [{n: Counter(c[n]) for n in range(order_lo, order_hi + 1)} for c in counts]
        for lang, c in zip(self.languages, self.counts):
            if not any(c.values()):
                raise ValueError(f"language {lang} has an empty n-gram table")
        self._vocab = {}
        self._denom = {}
        for n in range(order_lo, order_hi + 1):
            vocab = set()
            for c in self.counts:
                vocab.update(c[n])
            self._vocab[n] = vocab
            # one extra outcome for unseen n-grams keeps each order normalized
            size = len(vocab) + 1
            self._denom[n] = [sum(c[n].values()) + self.smoothing * size for c in self.counts]

    def ngram_logprob(self, lang_index: int, order: int, gram: str) -> float:
        count = self.counts[lang_index][order].get(gram, 0)
        return math.log((count + self.smoothing) / self._denom[order][lang_index])

    def _word_logscores(self, word):
        out = np.zeros(len(self.languages))
        for n, g in char_ngrams(word, self.order_lo, self.order_hi):
            for k in range(len(self.languages)):
                out[k] += self.ngram_logprob(k, n, g)
        return out

    def to_dict(self) -> dict:
        return {
            "format": LID_FORMAT,
            "version": LID_VERSION,
            "order_lo": self.order_lo,
            "order_hi": self.order_hi,
            "smoothing": self.smoothing,
            "languages": [l.code for l in self.languages],
            "counts": [
                {str(n): dict(sorted(c[n].items())) for n in sorted(c)} for c in self.counts
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LidModel":
        if d.get("format") != LID_FORMAT:
            raise ValueError("not a language-id model file")
        if d.get("version") != LID_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')}")
        counts = [{int(n): c for n, c in table.items()} for table in d["counts"]]
        return cls(d["order_lo"], d["order_hi"], d["languages"], counts, d["smoothing"])

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LidModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class PrefixLid(_LidBase):
    """Reads the language from a ``<lang>_`` token prefix.

    Meant for synthetic-environment tests that should not depend on a
    trained identifier. Unprefixed words score equally for all languages.
    """

    def __init__(self, languages, penalty: float = 10.0, sep: str = "_"):
        super().__init__()
        self.languages = [as_tag(l) for l in languages]
        self.penalty = penalty
        self.sep = sep

    def _word_logscores(self, word):
        prefix = word.split(self.sep, 1)[0]
        hits = [k for k, l in enumerate(self.languages) if l == prefix]
        if not hits or self.sep not in word:
            return np.zeros(len(self.languages))
        out = np.full(len(self.languages), -self.penalty)
        out[hits[0]] = 0.0
        return out


def train_ngram_lid(corpus: Corpus, order_lo: int = 1, order_hi: int = 3, smoothing: float = 1.0) -> LidModel:
    languages: list[LanguageTag] = []
    counts: list[dict] = []
    for lang, text in corpus:
        words = segment(text, lang).tokens
        if not words:
            continue
        if lang not in languages:
            languages.append(lang)
            counts.append({n: Counter() for n in range(order_lo, order_hi + 1)})
        table = counts[languages.index(lang)]
        for w in words:
            for n, g in char_ngrams(w, order_lo, order_hi):
                table[n][g] += 1
    if len(languages) < 2:
        raise ValueError(
            f"need at least 2 languages with nonempty lines, found {len(languages)}"
        )
    return LidModel(order_lo, order_hi, languages, counts, smoothing)


def detect(model, text) -> tuple[LanguageTag, float]:
    return model.detect(text)


@dataclass(frozen=True)
class MaskedSentence:
    original: TokenSentence
    masked_indices: frozenset
    dominant_lang: LanguageTag

    def unmasked(self) -> TokenSentence:
        keep = [t for j, t in enumerate(self.original.tokens) if j not in self.masked_indices]
        return self.original.with_tokens(keep)


@dataclass(frozen=True)
class LangAlignResult:
    detected: LanguageTag
    confidence: float
    r_la: int
    masked: MaskedSentence


def mask_code_switch(model, y: TokenSentence, tgt, word_conf_threshold: float = DEFAULT_WORD_THRESHOLD) -> MaskedSentence:
    """Mask words confidently identified as a language other than ``tgt``."""
    if not 0.0 < word_conf_threshold < 1.0:
        raise ValueError("word confidence threshold must lie in (0, 1)")
    tgt = as_tag(tgt)
    masked = set()
    for j, w in enumerate(y.tokens):
        lang, conf = model.classify_word(w)
        if lang != tgt and conf > word_conf_threshold:
            masked.add(j)
    keep = [t for j, t in enumerate(y.tokens) if j not in masked]
    dominant = model.detect(keep)[0] if keep else UNDETERMINED
    return MaskedSentence(y, frozenset(masked), dominant)


def language_alignment(
    model,
    y: TokenSentence,
    tgt,
    word_conf_threshold: float = DEFAULT_WORD_THRESHOLD,
    gate: str = "both",
) -> LangAlignResult:
    """Binary language reward for hypothesis ``y``.

    ``gate`` picks which detection must equal ``tgt``: the code-switch-masked
    sentence (``"masked"``), the raw sentence (``"raw"``), or both. With
    ``"both"`` a hypothesis dominated by another language fails even if a few
    target words survive masking.
    """
    if gate not in GATES:
        raise ValueError(f"gate must be one of {GATES}")
    tgt = as_tag(tgt)
    ms = mask_code_switch(model, y, tgt, word_conf_threshold)
    kept = ms.unmasked()
    if kept.tokens:
        m_lang, m_conf = model.detect(kept)
    else:
        m_lang, m_conf = UNDETERMINED, 0.0
    detected, conf = m_lang, m_conf
    if gate != "masked":
        r_lang, r_conf = model.detect(y)
        if gate == "raw" or r_lang != tgt:
            detected, conf = r_lang, r_conf
    return LangAlignResult(detected, conf, int(detected == tgt), ms)
