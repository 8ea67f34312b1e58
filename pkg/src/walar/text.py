"""Language-tagged text primitives and the tab-separated corpus format."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence


class CorpusFormatError(ValueError):
    """Raised when a corpus file line is not ``lang<TAB>text``."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True, init=False)
class LanguageTag:
    """Short language identifier, e.g. ``eng`` or ``L3``.

    Equality and hashing ignore case; the original spelling is kept for display.
    """

    code: str

    def __init__(self, code: str):
        if isinstance(code, LanguageTag):
            code = code.code
        if not isinstance(code, str) or not code:
            raise ValueError("language code must be a nonempty string")
        object.__setattr__(self, "code", code)

    def __eq__(self, other):
        if isinstance(other, LanguageTag):
            return self.code.casefold() == other.code.casefold()
        if isinstance(other, str):
            return self.code.casefold() == other.casefold()
        return NotImplemented

    def __hash__(self):
        return hash(self.code.casefold())

    def __str__(self):
        return self.code

    def __repr__(self):
        return f"LanguageTag({self.code!r})"


UNDETERMINED = LanguageTag("und")


def as_tag(lang) -> LanguageTag:
    return lang if isinstance(lang, LanguageTag) else LanguageTag(lang)


@dataclass(frozen=True)
class TokenSentence:
    tokens: tuple[str, ...]
    lang: LanguageTag

    def __post_init__(self):
        toks = tuple(self.tokens)
        if any((not isinstance(t, str)) or t == "" for t in toks):
            raise ValueError("tokens must be nonempty strings")
        object.__setattr__(self, "tokens", toks)
        object.__setattr__(self, "lang", as_tag(self.lang))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self) -> Iterator[str]:
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def text(self) -> str:
        return " ".join(self.tokens)

    def with_tokens(self, tokens: Sequence[str]) -> "TokenSentence":
        return TokenSentence(tuple(tokens), self.lang)


def whitespace_segmenter(text: str) -> list[str]:
    return text.split()


# Hook for scripts without spaces; keyed by casefolded language code.
_SEGMENTERS: dict[str, Callable[[str], list[str]]] = {}


def register_segmenter(lang, fn: Callable[[str], list[str]]) -> None:
    _SEGMENTERS[as_tag(lang).code.casefold()] = fn


def unregister_segmenter(lang) -> None:
    _SEGMENTERS.pop(as_tag(lang).code.casefold(), None)


def segment(text: str, lang) -> TokenSentence:
    """Split ``text`` into word tokens.

    Words are maximal runs of non-whitespace characters unless a segmenter
    was registered for ``lang``. No Unicode normalization is applied.
    """
    tag = as_tag(lang)
    fn = _SEGMENTERS.get(tag.code.casefold(), whitespace_segmenter)
    return TokenSentence(tuple(fn(text)), tag)


@dataclass(frozen=True)
class Corpus:
    entries: tuple[tuple[LanguageTag, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((as_tag(lang), text) for lang, text in self.entries)
        )

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def languages(self) -> list[LanguageTag]:
        seen: list[LanguageTag] = []
        for lang, _ in self.entries:
            if lang not in seen:
                seen.append(lang)
        return seen

    def sentences(self) -> list[TokenSentence]:
        return [segment(text, lang) for lang, text in self.entries]

    def dumps(self) -> str:
        return "".join(f"{lang.code}\t{text}\n" for lang, text in self.entries)


def parse_corpus(lines, path="<string>") -> Corpus:
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        if "\t" not in line:
            raise CorpusFormatError(path, lineno, "expected 'lang<TAB>text'")
        lang, text = line.split("\t", 1)
        if not lang:
            raise CorpusFormatError(path, lineno, "empty language tag")
        entries.append((LanguageTag(lang), text))
    return Corpus(tuple(entries))


def load_corpus(path: str | os.PathLike) -> Corpus:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_corpus(fh.read().split("\n"), path)


def save_corpus(corpus: Corpus, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(corpus.dumps())
