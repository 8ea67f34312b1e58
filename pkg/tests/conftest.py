import numpy as np
import pytest

from walar.env import SynthEnv
from walar.langid import PrefixLid, train_ngram_lid
from walar.text import Corpus

# Two synthetic languages with disjoint alphabets; words are random strings.
ALPHA = {"aaa": "abcdefg", "bbb": "pqrstuv"}


def random_words(rng, alphabet, n, lo=2, hi=6):
    return ["".join(rng.choice(list(alphabet), size=int(rng.integers(lo, hi + 1)))) for _ in range(n)]


def disjoint_corpus(rng, lines=100):
    entries = []
    for lang, alphabet in ALPHA.items():
        for _ in range(lines):
            entries.append((lang, " ".join(random_words(rng, alphabet, int(rng.integers(3, 8))))))
    return Corpus(tuple(entries))


@pytest.fixture(scope="session")
def disjoint_lid():
    return train_ngram_lid(disjoint_corpus(np.random.default_rng(0)))


@pytest.fixture(scope="session")
def small_env():
    return SynthEnv(num_langs=3, vocab_size=10, min_len=2, max_len=4)


@pytest.fixture(scope="session")
def env4():
    return SynthEnv()


@pytest.fixture(scope="session")
def prefix_lid(env4):
    return PrefixLid(env4.languages)


@pytest.fixture(scope="session")
def env4_lid(env4):
    return train_ngram_lid(env4.lid_corpus(200, np.random.default_rng(1)))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
