"""Quality-estimation scores on the MQM-style range [-25, 0] (0 is best).

``oracle_qe_score`` rewards source coverage regardless of output language.
``holey_qe_score`` adds switchable blind spots that a policy can exploit.
``RemoteQeClient`` forwards requests to an HTTP scoring service.
"""

from __future__ import annotations

import json
import logging
import math
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .text import LanguageTag, TokenSentence, as_tag

log = logging.getLogger(__name__)

QE_MIN = -25.0
QE_MAX = 0.0


@dataclass(frozen=True)
class QeScore:
    value: float

    def __post_init__(self):
        if not (QE_MIN <= self.value <= QE_MAX):
            raise ValueError(f"QE score {self.value} outside [{QE_MIN}, {QE_MAX}]")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class QeRequest:
    source: TokenSentence
    hypothesis: TokenSentence
    src_lang: LanguageTag
    tgt_lang: LanguageTag

    def __post_init__(self):
        if len(self.source) == 0:
            raise ValueError("QE request needs a nonempty source")
        object.__setattr__(self, "src_lang", as_tag(self.src_lang))
        object.__setattr__(self, "tgt_lang", as_tag(self.tgt_lang))

    @classmethod
    def of(cls, x: TokenSentence, y: TokenSentence, tgt=None):
        return cls(x, y, x.lang, as_tag(tgt) if tgt is not None else y.lang)


def coverage(req: QeRequest, env) -> float:
    """Fraction of source semantic ids expressed by any hypothesis word."""
    src_ids = [env.semantic_id(t) for t in req.source.tokens]
    hyp_ids = set()
    for t in req.hypothesis.tokens:
        if env.knows(t):
            hyp_ids.add(env.semantic_id(t))
    wanted = set(src_ids)
    return len(wanted & hyp_ids) / len(wanted)


def oracle_qe_score(req: QeRequest, env) -> QeScore:
    return QeScore(QE_MIN * (1.0 - coverage(req, env)))


@dataclass(frozen=True)
class Holes:
    """Blind spots of the holey scorer; each can be toggled on its own."""

    non_translation: bool = True  # y identical to x scores 0
    self_reference: bool = True  # y made of two identical halves scores 0
    under_translation: bool = True  # coverage enters through its square root

    @classmethod
    def none(cls):
        return cls(False, False, False)

    def any(self):
        return self.non_translation or self.self_reference or self.under_translation


def has_identical_halves(tokens) -> bool:
    n = len(tokens)
    return n >= 2 and n % 2 == 0 and tuple(tokens[: n // 2]) == tuple(tokens[n // 2 :])


def holey_qe_score(req: QeRequest, env, holes: Holes = Holes()) -> QeScore:
    cov = coverage(req, env)  # validates source words even when a hole fires
    if holes.non_translation and req.hypothesis.tokens == req.source.tokens:
        return QeScore(QE_MAX)
    if holes.self_reference and has_identical_halves(req.hypothesis.tokens):
        return QeScore(QE_MAX)
    if holes.under_translation:
        cov = math.sqrt(cov)
    return QeScore(QE_MIN * (1.0 - cov))


class QeServiceError(RuntimeError):
    """The remote scorer failed, answered non-2xx, or sent an unusable body."""


def clamp_score(value: float) -> QeScore:
    if not math.isfinite(value):
        raise QeServiceError(f"non-finite score {value!r}")
    if value > QE_MAX or value < QE_MIN:
        clamped = min(QE_MAX, max(QE_MIN, value))
        log.warning("QE service returned %s outside [%s, %s]; clamped to %s", value, QE_MIN, QE_MAX, clamped)
        value = clamped
    return QeScore(float(value))


class RemoteQeClient:
    """Client for ``POST /score`` returning ``{"score": number}``.

    There are no retries and no fallback: any failure raises
    :class:`QeServiceError`.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_concurrency: int = 4):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_concurrency = max(1, int(max_concurrency))

    @staticmethod
    def payload(req: QeRequest) -> dict:
        return {
            "source": req.source.text(),
            "hypothesis": req.hypothesis.text(),
            "src_lang": req.src_lang.code,
            "tgt_lang": req.tgt_lang.code,
        }

    def score(self, req: QeRequest) -> QeScore:
        body = json.dumps(self.payload(req)).encode("utf-8")
        http_req = urllib.request.Request(
            self.endpoint + "/score",
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(http_req, timeout=self.timeout) as resp:
                raw = resp.read()
        except urllib.error.HTTPError as e:
            raise QeServiceError(f"QE service answered HTTP {e.code}") from e
        except (urllib.error.URLError, OSError) as e:
            raise QeServiceError(f"QE service unreachable: {e}") from e
        try:
            value = json.loads(raw)["score"]
        except (ValueError, KeyError, TypeError) as e:
            raise QeServiceError(f"unparseable QE response: {raw[:200]!r}") from e
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise QeServiceError(f"score is not a number: {value!r}")
        return clamp_score(float(value))

    def score_batch(self, reqs) -> list[QeScore]:
        """Score requests concurrently; results keep input order, first error aborts."""
        reqs = list(reqs)
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            return list(pool.map(self.score, reqs))


def remote_qe_score(client: RemoteQeClient, req: QeRequest) -> QeScore:
    return client.score(req)
