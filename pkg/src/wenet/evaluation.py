"""Generation metrics: ROUGE-L, exact-match METEOR, and n-gram overlap."""

from __future__ import annotations

import json
import sys
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .corpus import CorpusSplit, Document
from .exceptions import ArgumentError

MAX_N = 6
METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA = 0.9, 3.0, 0.5
# memo entries allowed in the exact chunk search before falling back to greedy tiling
CHUNK_SEARCH_BUDGET = 200_000


class EmptyNGramWarning(UserWarning):
    """No n-grams of the requested order exist in the evaluated documents."""


def _require_tokens(hyp, ref):
    if len(hyp) == 0 or len(ref) == 0:
        raise ArgumentError("metrics need non-empty hypothesis and reference")


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> float:
    """Balanced LCS F-measure ``2PR / (P + R)``."""
    _require_tokens(hyp, ref)
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return 2 * p * r / (p + r)


def count_chunks(alignment: Iterable[tuple[int, int]]) -> int:
    """Runs of pairs adjacent in both sequences, in hypothesis order."""
    chunks, last = 0, None
    for i, j in sorted(alignment):
        if last is None or (i, j) != (last[0] + 1, last[1] + 1):
            chunks += 1
        last = (i, j)
    return chunks


def _exact_alignment(hyp, ref, budget):
    """Maximum exact matching with the fewest chunks, or None over budget.

    Dynamic program over (hyp position, used ref positions, ref position
    matched to the previous hyp token). A hyp token may stay unmatched only
    if enough later copies remain to saturate the free ref copies, which
    keeps every explored matching maximum.
    """
    slots = defaultdict(list)
    for j, tok in enumerate(ref):
        slots[tok].append(j)
    later = [0] * len(hyp)
    seen = Counter()
    for i in range(len(hyp) - 1, -1, -1):
        seen[hyp[i]] += 1
        later[i] = seen[hyp[i]]

    memo: dict = {}
    limit = sys.getrecursionlimit()
    if len(hyp) + 50 > limit:
        sys.setrecursionlimit(len(hyp) + 100)

    class _Budget(Exception):
        pass

    def solve(i, used, prev):
        if i == len(hyp):
            return 0, ()
        key = (i, used, prev)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= budget:
            raise _Budget
        free = [j for j in slots.get(hyp[i], ()) if not used >> j & 1]
        best = None
        if later[i] - 1 >= len(free):
            cost, pairs = solve(i + 1, used, -1)
            best = (cost, pairs)
        for j in free:
            cost, pairs = solve(i + 1, used | (1 << j), j)
            cost += 0 if prev >= 0 and j == prev + 1 else 1
            if best is None or cost < best[0]:
                best = (cost, ((i, j),) + pairs)
        memo[key] = best
        return best

    try:
        return list(solve(0, 0, -1)[1])
    except _Budget:
        return None
    finally:
        sys.setrecursionlimit(limit)


def _greedy_alignment(hyp, ref):
    """Tile with longest common unmatched substrings first."""
    free_h, free_r = [True] * len(hyp), [True] * len(ref)
    pairs = []
    while True:
        best_len, best_i, best_j = 0, -1, -1
        prev = [0] * (len(ref) + 1)
        for i in range(len(hyp)):
            cur = [0] * (len(ref) + 1)
            if free_h[i]:
                for j in range(len(ref)):
                    if free_r[j] and hyp[i] == ref[j]:
                        cur[j + 1] = prev[j] + 1
                        if cur[j + 1] > best_len:
                            best_len, best_i, best_j = cur[j + 1], i, j
            prev = cur
        if best_len == 0:
            return pairs
        for k in range(best_len):
            i, j = best_i - k, best_j - k
            free_h[i] = free_r[j] = False
            pairs.append((i, j))


def meteor_alignment(hyp: Sequence[Hashable], ref: Sequence[Hashable],
                     budget: int = CHUNK_SEARCH_BUDGET) -> list[tuple[int, int]]:
    """One-to-one exact-token alignment of maximum size with minimal chunks.

    Exact for all inputs whose search fits ``budget`` memo entries; larger
    inputs fall back to longest-substring tiling, which still reaches the
    maximum matching size.
    """
    pairs = _exact_alignment(hyp, ref, budget)
    return pairs if pairs is not None else _greedy_alignment(hyp, ref)


def meteor_score_from(matches: int, chunks: int, hyp_len: int, ref_len: int) -> float:
    if matches == 0:
        return 0.0
    p, r = matches / hyp_len, matches / ref_len
    fmean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
    return fmean * (1 - penalty)


def meteor_exact(hyp: Sequence[Hashable], ref: Sequence[Hashable]) -> float:
    """METEOR with exact surface matches only (alpha 0.9, beta 3, gamma 0.5)."""
    _require_tokens(hyp, ref)
    pairs = meteor_alignment(hyp, ref)
    return meteor_score_from(len(pairs), count_chunks(pairs), len(hyp), len(ref))


def ngrams(tokens: Sequence[Hashable], n: int) -> set[tuple]:
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


@dataclass
class NGramIndex:
    """Distinct n-grams (n = 1..max_n) of a training corpus."""

    grams: dict[int, set[tuple]]

    @classmethod
    def build(cls, docs: Iterable[Sequence[Hashable]], max_n: int = MAX_N) -> "NGramIndex":
        grams = {n: set() for n in range(1, max_n + 1)}
        for tokens in docs:
            for n in grams:
                grams[n] |= ngrams(tokens, n)
        return cls(grams)


def ngram_plagiarism(index: NGramIndex, test_docs: Iterable[Sequence[Hashable]],
                     n: int) -> float:
    """Percentage of distinct test n-gram types that also occur in ``index``.

    Returns 0.0 and emits :class:`EmptyNGramWarning` when the test documents
    contain no n-gram of order ``n``.
    """
    if not 1 <= n <= MAX_N:
        raise ArgumentError(f"n must be within 1..{MAX_N}, got {n}")
    if n not in index.grams:
        raise ArgumentError(f"index has no {n}-grams")
    types = set()
    for tokens in test_docs:
        types |= ngrams(tokens, n)
    if not types:
        warnings.warn(f"no {n}-grams in test documents", EmptyNGramWarning, stacklevel=2)
        return 0.0
    return 100.0 * len(types & index.grams[n]) / len(types)


def plagiarism_table(index: NGramIndex, test_docs: Sequence[Sequence[Hashable]],
                     max_n: int = MAX_N) -> dict[int, float]:
    return {n: ngram_plagiarism(index, test_docs, n) for n in range(1, max_n + 1)}


@dataclass
class EvalReport:
    rouge_l: float
    meteor: float
    plagiarism: dict[int, float]
    count: int
    per_document: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "rouge_l": self.rouge_l,
            "meteor": self.meteor,
            "plagiarism": {str(n): pct for n, pct in sorted(self.plagiarism.items())},
            "count": self.count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalReport":
        return cls(float(obj["rouge_l"]), float(obj["meteor"]),
                   {int(n): float(p) for n, p in obj["plagiarism"].items()}, int(obj["count"]))


def evaluate_documents(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                       index: NGramIndex | None = None) -> EvalReport:
    """Average both metrics over paired documents.

    Empty hypotheses score 0 and still count toward the average.
    """
    if len(hypotheses) != len(references):
        raise ArgumentError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    if not references:
        raise ArgumentError("nothing to evaluate")
    rows = []
    for hyp, ref in zip(hypotheses, references):
        if len(hyp) == 0:
            r, m = 0.0, 0.0
        else:
            r, m = rouge_l(hyp, ref), meteor_exact(hyp, ref)
        rows.append({"hypothesis": " ".join(hyp), "rouge_l": r, "meteor": m})
    plag = {}
    if index is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyNGramWarning)
            plag = plagiarism_table(index, hypotheses, max(index.grams))
    count = len(rows)
    return EvalReport(
        rouge_l=sum(row["rouge_l"] for row in rows) / count,
        meteor=sum(row["meteor"] for row in rows) / count,
        plagiarism=plag,
        count=count,
        per_document=rows,
    )


def generate_abstracts(checkpoint, docs: Sequence[Document], d: int,
                       max_len: int | None = None) -> list[list[str]]:
    """Decoded final drafts ``X^(d)`` (without EOS) for each document title."""
    from .model import generate

    vocab, params = checkpoint.vocab, checkpoint.params
    max_len = checkpoint.config.max_decode_len if max_len is None else max_len
    out = []
    for doc in docs:
        drafts = generate(vocab.encode(doc.title), params, d, max_len)
        out.append(vocab.decode(drafts[-1].without_eos()))
    return out


def evaluate_corpus(checkpoint, split: CorpusSplit, d: int | None = None,
                    subset: str = "test", max_len: int | None = None) -> EvalReport:
    """Generate for ``split.<subset>`` and score against the gold abstracts.

    The overlap table compares generations with the training abstracts.
    """
    docs = getattr(split, subset)
    if not docs:
        raise ArgumentError(f"{subset} split is empty")
    d = checkpoint.config.iterations if d is None else d
    hyps = generate_abstracts(checkpoint, docs, d, max_len)
    index = NGramIndex.build(doc.abstract for doc in split.train)
    report = evaluate_documents(hyps, [doc.abstract for doc in docs], index)
    for row, doc in zip(report.per_document, docs):
        row["title"] = " ".join(doc.title)
    return report
