"""Synthetic multilingual translation task and a tabular softmax policy.

Every language has its own vocabulary ``L<k>_w<id>``; word ``id`` carries the
same meaning in every language, so the gold translation of a sentence maps
each word position-wise into the target vocabulary.

The policy factors over source positions. For each source word it samples
from one softmax over all vocabulary tokens plus SKIP, conditioned on the
word's semantic id and the target language. After the last position a TAIL
context per target language keeps emitting tokens until STOP or a hard cap
of twice the source length. Log-probabilities and their gradients are exact.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .text import LanguageTag, TokenSentence, as_tag

CHECKPOINT_FORMAT = "walar-policy"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SynthEnv:
    num_langs: int = 4
    vocab_size: int = 50
    min_len: int = 3
    max_len: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.num_langs < 1 or self.vocab_size < 1:
            raise ValueError("need at least one language and one word")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(f"bad length range [{self.min_len}, {self.max_len}]")
        if self.max_len > self.vocab_size:
            raise ValueError("max_len cannot exceed vocab_size (words within a sentence are distinct)")

    # -- vocabulary -----------------------------------------------------
    @property
    def n_tokens(self) -> int:
        return self.num_langs * self.vocab_size

    def lang(self, k: int) -> LanguageTag:
        return LanguageTag(f"L{k}")

    @property
    def languages(self) -> list[LanguageTag]:
        return [self.lang(k) for k in range(self.num_langs)]

    def lang_index(self, lang) -> int:
        code = as_tag(lang).code
        if code[:1] in "Ll" and code[1:].isdigit():
            k = int(code[1:])
            if 0 <= k < self.num_langs:
                return k
        raise KeyError(f"unknown language {lang!s}")

    def token(self, k: int, sid: int) -> str:
        return f"L{k}_w{sid}"

    def token_index(self, k: int, sid: int) -> int:
        return k * self.vocab_size + sid

    def token_of_index(self, a: int) -> str:
        return self.token(a // self.vocab_size, a % self.vocab_size)

    def parse(self, token: str) -> tuple[int, int]:
        head, sep, tail = token.partition("_w")
        if sep and head[:1] == "L" and head[1:].isdigit() and tail.isdigit():
            k, sid = int(head[1:]), int(tail)
            if 0 <= k < self.num_langs and 0 <= sid < self.vocab_size and token == self.token(k, sid):
                return k, sid
        raise KeyError(f"token {token!r} not in environment vocabulary")

    def knows(self, token: str) -> bool:
        try:
            self.parse(token)
        except KeyError:
            return False
        return True

    def semantic_id(self, token: str) -> int:
        return self.parse(token)[1]

    def config(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.config(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- data -----------------------------------------------------------
    def sentence(self, k: int, sids) -> TokenSentence:
        return TokenSentence(tuple(self.token(k, int(s)) for s in sids), self.lang(k))

    def lid_corpus(self, lines_per_lang: int, rng):
        """Monolingual lines in every language, for training the identifier."""
        from .text import Corpus

        entries = []
        for k in range(self.num_langs):
            for _ in range(lines_per_lang):
                n = int(rng.integers(self.min_len, self.max_len + 1))
                sids = rng.choice(self.vocab_size, size=n, replace=False)
                entries.append((self.lang(k), self.sentence(k, sids).text()))
        return Corpus(tuple(entries))


def gen_prompt(env: SynthEnv, rng, direction=None) -> tuple[TokenSentence, LanguageTag]:
    """Random source sentence and a target language different from its own."""
    if env.num_langs < 2:
        raise ValueError("need at least two languages to form a translation direction")
    if direction is None:
        src = int(rng.integers(env.num_langs))
        tgt = int(rng.integers(env.num_langs - 1))
        tgt += tgt >= src
    else:
        src, tgt = (env.lang_index(d) if not isinstance(d, (int, np.integer)) else int(d) for d in direction)
        if src == tgt:
            raise ValueError("source and target language must differ")
    n = int(rng.integers(env.min_len, env.max_len + 1))
    sids = rng.choice(env.vocab_size, size=n, replace=False)
    return env.sentence(src, sids), env.lang(tgt)


def gold_translate(env: SynthEnv, x: TokenSentence, tgt) -> TokenSentence:
    k = env.lang_index(tgt)
    return env.sentence(k, [env.semantic_id(t) for t in x.tokens])


@dataclass(frozen=True)
class PriorConfig:
    """Logit offsets of a "pretrained" starting policy.

    ``gold`` favours the correct target word, ``pivot`` favours the same
    word in ``pivot_lang`` (a high-resource language the model drifts into),
    ``skip`` favours dropping the word. In the TAIL context ``stop`` favours
    ending the sentence. ``noise`` is the std of Gaussian logit jitter.
    A ``rare_fraction`` of semantic ids (chosen with the rng) get
    ``rare_gold`` instead of ``gold``: words the model barely knows.
    """

    gold: float = 0.0
    rare_fraction: float = 0.0
    rare_gold: float = 0.0
    pivot: float = 0.0
    pivot_lang: int = 0
    skip: float = 0.0
    stop: float = 0.0
    noise: float = 0.0


class ToyPolicy:
    """Tabular softmax policy; ``logits`` is the whole parameter vector."""

    def __init__(self, env: SynthEnv, logits=None, temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.env = env
        shape = (self.n_contexts, self.n_actions)
        if logits is None:
            logits = np.zeros(shape)
        logits = np.array(logits, dtype=float)
        if logits.shape != shape:
            raise ValueError(f"logits shape {logits.shape}, expected {shape}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        self.logits = logits
        self.temperature = float(temperature)
        self._cache = {}

    # layout ------------------------------------------------------------
    @property
    def n_actions(self) -> int:
        return self.env.n_tokens + 1

    @property
    def end_action(self) -> int:
        """SKIP in position contexts, STOP in tail contexts."""
        return self.env.n_tokens

    @property
    def n_contexts(self) -> int:
        return self.env.num_langs * self.env.vocab_size + self.env.num_langs

    def position_context(self, tgt: int, sid: int) -> int:
        return tgt * self.env.vocab_size + sid

    def tail_context(self, tgt: int) -> int:
        return self.env.num_langs * self.env.vocab_size + tgt

    # parameters --------------------------------------------------------
    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.env, self.logits.copy(), self.temperature)

    def set_logits(self, logits) -> None:
        logits = np.asarray(logits, dtype=float)
        if logits.shape != self.logits.shape:
            raise ValueError("shape mismatch")
        self.logits = logits.copy()
        self._cache.clear()

    def log_probs(self, temperature: float | None = None) -> np.ndarray:
        t = self.temperature if temperature is None else float(temperature)
        key = ("lp", t)
        if key not in self._cache:
            z = self.logits / t
            z = z - z.max(axis=1, keepdims=True)
            self._cache[key] = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return self._cache[key]

    def probs(self, temperature: float | None = None) -> np.ndarray:
        t = self.temperature if temperature is None else float(temperature)
        key = ("p", t)
        if key not in self._cache:
            self._cache[key] = np.exp(self.log_probs(t))
        return self._cache[key]

    def _cdf(self, temperature):
        key = ("cdf", temperature)
        if key not in self._cache:
            c = np.cumsum(self.probs(temperature), axis=1)
            c[:, -1] = 1.0
            self._cache[key] = c
        return self._cache[key]

    @classmethod
    def pretrained(cls, env: SynthEnv, prior: PriorConfig, rng=None, temperature: float = 1.0) -> "ToyPolicy":
        pol = cls(env, temperature=temperature)
        W, K = env.vocab_size, env.num_langs
        L = pol.logits
        if (prior.noise or prior.rare_fraction) and rng is None:
            raise ValueError("noise and rare words need an rng")
        if prior.noise:
            L += prior.noise * rng.standard_normal(L.shape)
        rare = set()
        if prior.rare_fraction:
            n_rare = int(round(prior.rare_fraction * W))
            rare = set(rng.choice(W, size=n_rare, replace=False).tolist())
        for tgt in range(K):
            for sid in range(W):
                c = pol.position_context(tgt, sid)
                L[c, env.token_index(tgt, sid)] += prior.rare_gold if sid in rare else prior.gold
                L[c, env.token_index(prior.pivot_lang, sid)] += prior.pivot
                L[c, pol.end_action] += prior.skip
            L[pol.tail_context(tgt), pol.end_action] += prior.stop
        pol._cache.clear()
        return pol

    # checkpoints -------------------------------------------------------
    def save(self, path: str | os.PathLike, rng_state=None) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "env": self.env.config(),
            "env_hash": self.env.config_hash(),
            "temperature": self.temperature,
            "rng_state": rng_state,
        }
        # np.savez stamps the current time into the zip; write entries by hand
        # with a fixed date so equal policies give byte-identical files
        arrays = {"logits": self.logits, "meta": np.array(json.dumps(meta, sort_keys=True))}
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                buf = io.BytesIO()
                np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
                zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())

    @classmethod
    def load(cls, path: str | os.PathLike, env: SynthEnv | None = None):
        """Returns ``(policy, rng_state)``; refuses a checkpoint from another env."""
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            logits = data["logits"]
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} policy checkpoint")
        saved_env = SynthEnv(**meta["env"])
        if saved_env.config_hash() != meta["env_hash"]:
            raise ValueError(f"{path}: env hash does not match recorded env config")
        if env is not None and env.config_hash() != meta["env_hash"]:
            raise ValueError(f"{path}: checkpoint was trained on a different environment")
        return cls(saved_env, logits, meta["temperature"]), meta["rng_state"]


@dataclass
class Rollout:
    hypothesis: TokenSentence
    contexts: np.ndarray
    actions: np.ndarray
    log_prob_total: float
    n_positions: int
    reward: object = None

    @property
    def position_actions(self) -> np.ndarray:
        return self.actions[: self.n_positions]


@dataclass
class RolloutGroup:
    prompt: tuple
    rollouts: list
    advantages: list | None = None

    def __len__(self):
        return len(self.rollouts)


def prompt_contexts(policy: ToyPolicy, x: TokenSentence, tgt) -> tuple[np.ndarray, int]:
    env = policy.env
    k = env.lang_index(tgt)
    pos = np.array([policy.position_context(k, env.semantic_id(t)) for t in x.tokens], dtype=np.int64)
    return pos, policy.tail_context(k)


def _hypothesis(env, actions, tgt, end_action) -> TokenSentence:
    toks = tuple(env.token_of_index(int(a)) for a in actions if a != end_action)
    return TokenSentence(toks, tgt)


def sample_rollouts(policy: ToyPolicy, prompt, G: int = 8, temperature: float | None = None, rng=None, greedy: bool = False) -> RolloutGroup:
    """Draw ``G`` hypotheses for ``prompt = (x, tgt)``.

    ``greedy`` takes the argmax action everywhere, so all ``G`` rollouts
    coincide. Log-probabilities are reported at the sampling temperature.
    """
    if G < 1:
        raise ValueError("G must be at least 1")
    t = policy.temperature if temperature is None else float(temperature)
    if t <= 0:
        raise ValueError("temperature must be positive")
    if rng is None and not greedy:
        raise ValueError("sampling needs an rng")
    x, tgt = prompt
    tgt = as_tag(tgt)
    env = policy.env
    pos_ctx, tail_ctx = prompt_contexts(policy, x, tgt)
    m = len(pos_ctx)
    cap = 2 * m
    end = policy.end_action
    lp = policy.log_probs(t)

    if greedy:
        pos_act = np.tile(policy.logits[pos_ctx].argmax(axis=1), (G, 1))
        tail_best = int(policy.logits[tail_ctx].argmax())
        tails = [[tail_best] * (1 if tail_best == end else cap) for _ in range(G)]
    else:
        cdf = policy._cdf(t)
        u = rng.random((G, m))
        pos_act = np.empty((G, m), dtype=np.int64)
        for i, c in enumerate(pos_ctx):
            pos_act[:, i] = np.searchsorted(cdf[c], u[:, i], side="right")
        tails = [[] for _ in range(G)]
        active = list(range(G))
        for _ in range(cap):
            if not active:
                break
            draws = np.searchsorted(cdf[tail_ctx], rng.random(len(active)), side="right")
            still = []
            for g, a in zip(active, draws):
                tails[g].append(int(a))
                if a != end:
                    still.append(g)
            active = still
    np.minimum(pos_act, end, out=pos_act)

    rollouts = []
    for g in range(G):
        tail = np.minimum(np.asarray(tails[g], dtype=np.int64), end)
        ctx = np.concatenate([pos_ctx, np.full(len(tail), tail_ctx, dtype=np.int64)])
        act = np.concatenate([pos_act[g], tail])
        rollouts.append(
            Rollout(
                hypothesis=_hypothesis(env, act, tgt, end),
                contexts=ctx,
                actions=act,
                log_prob_total=float(lp[ctx, act].sum()),
                n_positions=m,
            )
        )
    return RolloutGroup((x, tgt), rollouts)


def validate_actions(policy: ToyPolicy, m: int, actions) -> np.ndarray:
    acts = np.asarray(actions, dtype=np.int64)
    end = policy.end_action
    if acts.ndim != 1 or len(acts) < m:
        raise ValueError(f"need at least {m} actions for {m} source positions")
    if np.any(acts < 0) or np.any(acts > end):
        raise ValueError("action index out of range")
    tail = acts[m:]
    cap = 2 * m
    stops = np.flatnonzero(tail == end)
    if len(stops) > 1 or (len(stops) == 1 and stops[0] != len(tail) - 1):
        raise ValueError("STOP may only appear once, as the final tail action")
    emitted = len(tail) - len(stops)
    if emitted > cap:
        raise ValueError(f"tail emits {emitted} tokens, cap is {cap}")
    if len(stops) == 0 and emitted != cap:
        raise ValueError("tail must end with STOP unless it reaches the length cap")
    return acts


def action_contexts(policy: ToyPolicy, prompt, actions) -> tuple[np.ndarray, np.ndarray]:
    x, tgt = prompt
    pos_ctx, tail_ctx = prompt_contexts(policy, x, tgt)
    acts = validate_actions(policy, len(pos_ctx), actions)
    ctx = np.concatenate([pos_ctx, np.full(len(acts) - len(pos_ctx), tail_ctx, dtype=np.int64)])
    return ctx, acts


def sequence_log_prob(policy: ToyPolicy, prompt, actions, temperature: float | None = None) -> float:
    ctx, acts = action_contexts(policy, prompt, actions)
    return float(policy.log_probs(temperature)[ctx, acts].sum())


def rollout_from_actions(policy: ToyPolicy, prompt, actions) -> Rollout:
    """Build a rollout from an explicit action list (for probing failure modes)."""
    ctx, acts = action_contexts(policy, prompt, actions)
    x, tgt = prompt
    tgt = as_tag(tgt)
    return Rollout(
        hypothesis=_hypothesis(policy.env, acts, tgt, policy.end_action),
        contexts=ctx,
        actions=acts,
        log_prob_total=float(policy.log_probs()[ctx, acts].sum()),
        n_positions=len(x),
    )


def synthetic_embedder(env: SynthEnv, dim: int = 32, scale: float = 3.5, lang_noise: float = 0.0, seed: int = 0):
    """Embeddings shared across languages by semantic id.

    Each id gets a random unit direction times ``scale``; ``lang_noise`` adds
    a per-token Gaussian perturbation so translations are close, not equal.
    """
    from .alignment import TableEmbedder

    rng = np.random.default_rng(seed)
    base = rng.standard_normal((env.vocab_size, dim))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    table = {}
    for k in range(env.num_langs):
        jitter = lang_noise * rng.standard_normal((env.vocab_size, dim)) if lang_noise else 0.0
        vecs = scale * (base + jitter)
        for sid in range(env.vocab_size):
            table[env.token(k, sid)] = vecs[sid]
    return TableEmbedder(table, dim)
