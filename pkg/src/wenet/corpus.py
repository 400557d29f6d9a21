"""Title/abstract corpora: tokenization, vocabulary, and seeded splits."""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .exceptions import ArgumentError, CorpusParseError, OutOfRangeError

PAD, SOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")
MAX_ABSTRACT_TOKENS = 200

_PUNCT = re.compile(r"""([.,;:!?()"'])""")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split off ``.,;:!?()"'``.

    >>> tokenize("web-based (IE)")
    ['web-based', '(', 'ie', ')']
    """
    return _PUNCT.sub(r" \1 ", text.lower()).split()


@dataclass(frozen=True)
class Document:
    title: tuple[str, ...]
    abstract: tuple[str, ...]

    @classmethod
    def from_text(cls, title: str, abstract: str, max_abstract_len: int | None = None):
        abs_tokens = tokenize(abstract)
        if max_abstract_len is not None:
            abs_tokens = abs_tokens[:max_abstract_len]
        return cls(tuple(tokenize(title)), tuple(abs_tokens))

    def to_json(self) -> str:
        return json.dumps({"title": " ".join(self.title), "abstract": " ".join(self.abstract)},
                          ensure_ascii=False)


class Vocabulary:
    """Bidirectional token/id map; ids 0-3 are PAD, SOS, EOS and UNK."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {tok: i for i, tok in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise ArgumentError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self.stoi.get
        return [get(tok, UNK) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.itos):
                raise OutOfRangeError(f"id {i} out of range for vocabulary of size {len(self)}", i)
            out.append(self.itos[i])
        return out

    def to_text(self) -> str:
        return "".join(tok + "\n" for tok in self.itos)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if tuple(lines[:4]) != RESERVED:
            raise CorpusParseError("vocabulary file lacks the reserved-token header", 1)
        return cls(lines[4:])

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def build_vocab(docs: Sequence[Document], min_freq: int = 1,
                max_size: int | None = None) -> Vocabulary:
    """Vocabulary of tokens seen at least ``min_freq`` times.

    Ids are assigned by descending frequency with lexicographic tie-breaks.
    ``max_size`` caps the total size including the four reserved entries.
    """
    if min_freq < 1:
        raise ArgumentError("min_freq must be at least 1")
    if not docs:
        raise ArgumentError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for doc in docs:
        counts.update(doc.title)
        counts.update(doc.abstract)
    for tok in RESERVED:
        counts.pop(tok, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max(0, max_size - len(RESERVED))]
    if not kept:
        raise ArgumentError(f"no token occurs at least {min_freq} times")
    return Vocabulary(kept)


@dataclass(frozen=True)
class CorpusSplit:
    train: list[Document]
    validation: list[Document]
    test: list[Document]
    split_seed: int | None = None


def _parse_line(line: str, lineno: int, max_abstract_len: int | None) -> Document:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise CorpusParseError("record is not a JSON object", lineno)
    for key in ("title", "abstract"):
        if not isinstance(obj.get(key), str):
            raise CorpusParseError(f"missing or non-string field {key!r}", lineno)
    doc = Document.from_text(obj["title"], obj["abstract"], max_abstract_len)
    if not doc.title or not doc.abstract:
        raise CorpusParseError("title and abstract must be non-empty after tokenization", lineno)
    return doc


def load_documents(path, max_abstract_len: int | None = MAX_ABSTRACT_TOKENS) -> list[Document]:
    """Parse a JSON-lines file of ``{"title": ..., "abstract": ...}`` records."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            docs.append(_parse_line(line, lineno, max_abstract_len))
    return docs


def write_documents(docs: Iterable[Document], path):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(doc.to_json() + "\n")


def split_documents(docs: Sequence[Document], seed: int) -> CorpusSplit:
    """Shuffle with a seeded PRNG and cut 80/10/10 (floor, floor, remainder)."""
    order = list(docs)
    random.Random(seed).shuffle(order)
    n = len(order)
    n_train, n_valid = (8 * n) // 10, n // 10
    return CorpusSplit(
        train=order[:n_train],
        validation=order[n_train:n_train + n_valid],
        test=order[n_train + n_valid:],
        split_seed=seed,
    )


def load_and_split(path, seed: int = 0,
                   max_abstract_len: int | None = MAX_ABSTRACT_TOKENS) -> CorpusSplit:
    docs = load_documents(path, max_abstract_len)
    if not docs:
        raise ArgumentError(f"{path}: corpus file is empty")
    return split_documents(docs, seed)
