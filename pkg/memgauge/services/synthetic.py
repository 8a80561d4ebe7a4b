#services/synthetic.py

"""Synthetic method_name corpora.

Identifiers are camelCase pairs of pronounceable pseudo-words. Each label
owns a block of signature words that its bodies draw from with probability
``signal``; the remaining words are filler shared by every label. Word
lists depend only on the sizes, so corpora generated with different seeds
share labels and vocabulary.
"""

import logging
from typing import List, Sequence

from memgauge.models.sample import Corpus, Task
from memgauge.services.corpus import normalize_source
from memgauge.utils.rng import make_rng

logger = logging.getLogger("memgauge")

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"
_SYLLABLES = [c + v for c in _CONSONANTS for v in _VOWELS]
_OPERATORS = ("+", "-", "*")


def pseudo_word(index: int) -> str:
    n = len(_SYLLABLES)
    if not 0 <= index < n * n:
        raise ValueError(f"word index {index} outside [0, {n * n})")
    return _SYLLABLES[index // n] + _SYLLABLES[index % n]


def _camel(first: str, second: str) -> str:
    return first + second.capitalize()


class _Generator:
    def __init__(self, labels: int, vocab_size: int, signature_size: int, signal: float, seed: int):
        if vocab_size < labels * signature_size + 2:
            raise ValueError("vocab_size must leave room for filler words")
        words = [pseudo_word(i) for i in range(vocab_size)]
        cut = labels * signature_size
        self.signatures = [words[i * signature_size:(i + 1) * signature_size] for i in range(labels)]
        self.filler = words[cut:]
        self.names = [_camel(s[0], s[1]) for s in self.signatures]
        self.signal = signal
        self.rng = make_rng(seed)

    def _word(self, label: int) -> str:
        pool: Sequence[str] = self.signatures[label] if self.rng.random() < self.signal else self.filler
        return pool[int(self.rng.integers(len(pool)))]

    def identifier(self, label: int) -> str:
        return _camel(self._word(label), self._word(label))

    def method(self, label: int, min_statements: int, max_statements: int) -> str:
        params = [self.identifier(label) for _ in range(2)]
        lines = [f"void run(int {params[0]}, int {params[1]}) {{"]
        live = list(params)
        count = int(self.rng.integers(min_statements, max_statements + 1))
        for _ in range(count):
            target = self.identifier(label)
            left = live[int(self.rng.integers(len(live)))]
            right = live[int(self.rng.integers(len(live)))]
            op = _OPERATORS[int(self.rng.integers(len(_OPERATORS)))]
            lines.append(f"    int {target} = {left} {op} {right};")
            live.append(target)
        lines.append(f"    return {live[-1]};")
        lines.append("}")
        return "\n".join(lines)


def label_names(labels: int, vocab_size: int = 500, signature_size: int = 8) -> List[str]:
    return _Generator(labels, vocab_size, signature_size, 0.0, 0).names


def synthetic_method_corpus(
    labels: int = 10,
    per_label: int = 200,
    vocab_size: int = 500,
    seed: int = 0,
    signature_size: int = 8,
    signal: float = 0.5,
    min_statements: int = 3,
    max_statements: int = 6,
    prefix: str = "syn",
) -> Corpus:
    """A balanced method_name corpus of ``labels * per_label`` samples, labels interleaved."""
    generator = _Generator(labels, vocab_size, signature_size, signal, seed)
    samples = []
    for j in range(per_label):
        for label in range(labels):
            raw = generator.method(label, min_statements, max_statements)
            samples.append(normalize_source(
                raw, Task.METHOD_NAME, f"{prefix}-{label:03d}-{j:05d}", target_label=generator.names[label],
            ))
    logger.info(f"Generated {len(samples)} synthetic samples over {labels} labels (seed {seed})")
    return Corpus.from_samples(Task.METHOD_NAME, samples)
