"""Embedding-based word alignment and its coverage F1 score.

Two row-softmaxed similarity matrices are built from dot products of word
embeddings, a pair is kept when both directions clear the threshold ``c``,
and the kept pairs are scored by how many distinct source and hypothesis
words they cover.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Protocol

import numpy as np

from .text import TokenSentence

DEFAULT_THRESHOLD = 1e-3


class UnknownWordError(KeyError):
    pass


@dataclass(frozen=True)
class SimilarityPair:
    sim_xy: np.ndarray  # m x n, rows sum to 1
    sim_yx: np.ndarray  # n x m, rows sum to 1


@dataclass(frozen=True)
class AlignmentResult:
    pairs: frozenset
    precision: float
    recall: float
    f1: float
    threshold_c: float = DEFAULT_THRESHOLD


def _row_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_embeddings(h, name):
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] == 0 or h.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-D matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValueError(f"{name} has non-finite entries")
    return h


def similarity_matrices(h_x, h_y) -> SimilarityPair:
    h_x = _check_embeddings(h_x, "h_x")
    h_y = _check_embeddings(h_y, "h_y")
    if h_x.shape[1] != h_y.shape[1]:
        raise ValueError(
            f"embedding dimension mismatch: {h_x.shape[1]} vs {h_y.shape[1]}"
        )
    dots = h_x @ h_y.T
    # sim_yx gets its own softmax over source words, not a transpose of sim_xy
    return SimilarityPair(_row_softmax(dots), _row_softmax(dots.T))


def extract_alignment(sims: SimilarityPair, c: float = DEFAULT_THRESHOLD, masked=()) -> set:
    """Pairs ``(i, j)`` with ``sim_xy[i, j] > c`` and ``sim_yx[j, i] > c``.

    Hypothesis positions in ``masked`` are never aligned.
    """
    if not 0.0 < c < 1.0:
        raise ValueError(f"threshold c must lie in (0, 1), got {c}")
    both = (sims.sim_xy > c) & (sims.sim_yx.T > c)
    masked = list(masked)
    if masked:
        both[:, masked] = False
    ii, jj = np.nonzero(both)
    return set(zip(ii.tolist(), jj.tolist()))


def alignment_f1(pairs: Iterable, m: int, n: int, masked=(), c: float = DEFAULT_THRESHOLD) -> AlignmentResult:
    """Coverage precision/recall/F1 of an alignment.

    Precision counts distinct aligned hypothesis positions over ``n`` (masked
    positions included in ``n``), recall counts distinct aligned source
    positions over ``m``.
    """
    pairs = frozenset((int(i), int(j)) for i, j in pairs)
    if m <= 0 or n <= 0:
        return AlignmentResult(frozenset(), 0.0, 0.0, 0.0, c)
    masked = set(masked)
    for i, j in pairs:
        if not (0 <= i < m and 0 <= j < n):
            raise ValueError(f"pair {(i, j)} out of range for m={m}, n={n}")
        if j in masked:
            raise ValueError(f"pair {(i, j)} touches masked hypothesis position {j}")
    precision = len({j for _, j in pairs}) / n
    recall = len({i for i, _ in pairs}) / m
    if precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return AlignmentResult(pairs, precision, recall, f1, c)


class Embedder(Protocol):
    dim: int

    def embed(self, word: str) -> np.ndarray: ...


def embed_sentence(embedder, tokens, on_unknown: str = "error") -> np.ndarray:
    rows = []
    for w in tokens:
        try:
            rows.append(embedder.embed(w))
        except UnknownWordError:
            if on_unknown == "zero":
                rows.append(np.zeros(embedder.dim))
            else:
                raise
    return np.asarray(rows, dtype=float).reshape(len(rows), embedder.dim)


def word_alignment_score(
    x: TokenSentence,
    y: TokenSentence,
    embedder,
    c: float = DEFAULT_THRESHOLD,
    masked=(),
    on_unknown: str = "error",
) -> AlignmentResult:
    """Alignment F1 between ``x`` and ``y`` with hypothesis positions ``masked``.

    Masked words are not embedded and never aligned, but they still count
    in the hypothesis length.
    """
    m, n = len(x), len(y)
    masked = frozenset(masked)
    keep = [j for j in range(n) if j not in masked]
    if m == 0 or not keep:
        return alignment_f1((), m, n, masked, c)
    h_x = embed_sentence(embedder, x.tokens, on_unknown)
    h_y = embed_sentence(embedder, [y.tokens[j] for j in keep], on_unknown)
    local = extract_alignment(similarity_matrices(h_x, h_y), c)
    pairs = {(i, keep[j]) for i, j in local}
    return alignment_f1(pairs, m, n, masked, c)


class TableEmbedder:
    """Word -> vector lookup backed by an in-memory table."""

    def __init__(self, table: dict, dim: int | None = None):
        self.table = {w: np.asarray(v, dtype=float) for w, v in table.items()}
        if dim is None:
            if not self.table:
                raise ValueError("empty table needs an explicit dim")
            dim = len(next(iter(self.table.values())))
        self.dim = dim
        for w, v in self.table.items():
            if v.shape != (dim,):
                raise ValueError(f"vector for {w!r} has shape {v.shape}, expected ({dim},)")

    def embed(self, word):
        try:
            return self.table[word]
        except KeyError:
            raise UnknownWordError(word) from None

    def __contains__(self, word):
        return word in self.table


def load_embeddings(path: str | os.PathLike) -> TableEmbedder:
    """Read a ``<count> <dim>`` header followed by ``word v1 ... vd`` lines."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected '<count> <dim>' header")
        count, dim = int(header[0]), int(header[1])
        table = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected word plus {dim} values")
            table[parts[0]] = np.array([float(v) for v in parts[1:]])
    if len(table) != count:
        raise ValueError(f"{path}: header says {count} words, found {len(table)}")
    return TableEmbedder(table, dim)


def save_embeddings(embedder: TableEmbedder, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(embedder.table)} {embedder.dim}\n")
        for w, v in embedder.table.items():
            fh.write(w + " " + " ".join(repr(float(a)) for a in v) + "\n")
