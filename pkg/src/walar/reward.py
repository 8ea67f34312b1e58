"""The composite translation reward.

    total = -25                       if the hypothesis is not in the target language
    total = r_qe(x, y) + alpha * r_wa(x, y')   otherwise

``y'`` is the hypothesis with code-switched words masked. Two ablations drop
pieces of the formula: ``qe_la`` keeps only the language gate around QE and
``qe_only`` is the bare QE score.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass, field

from .alignment import DEFAULT_THRESHOLD, word_alignment_score
from .langid import DEFAULT_WORD_THRESHOLD, GATES, language_alignment
from .qe import QE_MIN, QeRequest, oracle_qe_score
from .text import LanguageTag, TokenSentence, as_tag

MODES = ("qe_only", "qe_la", "walar")
GATE_PENALTY = QE_MIN


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 20.0
    wa_threshold_c: float = DEFAULT_THRESHOLD
    mode: str = "walar"
    force_la: bool = False  # treat every hypothesis as target-language
    word_conf_threshold: float = DEFAULT_WORD_THRESHOLD
    la_gate: str = "both"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.wa_threshold_c < 1.0:
            raise ValueError("wa_threshold_c must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.la_gate not in GATES:
            raise ValueError(f"la_gate must be one of {GATES}")


@dataclass(frozen=True)
class RewardBreakdown:
    r_qe: float
    r_wa: float | None
    r_la: int | None
    masked_indices: frozenset
    total: float
    alpha: float
    detected: LanguageTag | None = None

    def as_dict(self) -> dict:
        return {
            "r_qe": self.r_qe,
            "r_wa": self.r_wa,
            "r_la": self.r_la,
            "masked": sorted(self.masked_indices),
            "total": self.total,
            "alpha": self.alpha,
            "detected": None if self.detected is None else self.detected.code,
        }


@dataclass
class RewardComponents:
    """Scorer handles plus per-component call counters.

    ``qe`` is any callable ``QeRequest -> QeScore``; the default is the
    faithful oracle over ``env``.
    """

    env: object
    lid: object = None
    embedder: object = None
    qe: object = None
    calls: Counter = field(default_factory=Counter)

    def score_qe(self, x, y, tgt) -> float:
        self.calls["qe"] += 1
        req = QeRequest(x, y, x.lang, tgt)
        if self.qe is None:
            return float(oracle_qe_score(req, self.env))
        return float(self.qe(req))

    def score_la(self, y, tgt, cfg: RewardConfig):
        self.calls["la"] += 1
        if self.lid is None:
            raise ValueError("language identifier not configured")
        return language_alignment(self.lid, y, tgt, cfg.word_conf_threshold, cfg.la_gate)

    def score_wa(self, x, y, masked, cfg: RewardConfig):
        self.calls["wa"] += 1
        if self.embedder is None:
            raise ValueError("embedder not configured")
        return word_alignment_score(x, y, self.embedder, cfg.wa_threshold_c, masked)


def walar_reward(x: TokenSentence, y: TokenSentence, tgt, cfg: RewardConfig, components: RewardComponents) -> RewardBreakdown:
    tgt = as_tag(tgt)
    r_qe = components.score_qe(x, y, tgt)
    if cfg.mode == "qe_only":
        return RewardBreakdown(r_qe, None, None, frozenset(), r_qe, cfg.alpha)

    if cfg.force_la:
        r_la, masked, detected = 1, frozenset(), tgt
    else:
        la = components.score_la(y, tgt, cfg)
        r_la, masked, detected = la.r_la, la.masked.masked_indices, la.detected

    r_wa = None
    if cfg.mode == "walar":
        r_wa = components.score_wa(x, y, masked, cfg).f1

    if r_la == 0:
        total = GATE_PENALTY
    elif cfg.mode == "walar":
        total = r_qe + cfg.alpha * r_wa
    else:
        total = r_qe
    return RewardBreakdown(r_qe, r_wa, r_la, masked, total, cfg.alpha, detected)


class Rewarder:
    """``walar_reward`` with fixed config/components and a small LRU cache."""

    def __init__(self, cfg: RewardConfig, components: RewardComponents, cache_size: int = 65536):
        self.cfg = cfg
        self.components = components
        self.cache_size = cache_size
        self._cache: OrderedDict = OrderedDict()

    def __call__(self, x: TokenSentence, y: TokenSentence, tgt) -> RewardBreakdown:
        tgt = as_tag(tgt)
        key = (x.tokens, x.lang, y.tokens, tgt)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        out = walar_reward(x, y, tgt, self.cfg, self.components)
        if self.cache_size:
            self._cache[key] = out
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return out
