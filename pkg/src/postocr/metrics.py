"""Edit-distance alignment and the CER / WER / full-match evaluation metrics.

Two character error rates are exposed:

* ``cer`` -- ``(S + D + I) / (S + D + I + C)`` with ``C`` the number of
  matched characters in a minimal alignment. Bounded by 1.
* ``cer_standard`` -- ``(S + D + I) / len(reference)``, the usual
  definition, which exceeds 1 when insertions dominate.

WER always divides by the reference word count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Hashable, Iterable, Sequence

from .errors import EmptyInputError, EmptyReferenceError
from .text import normalize


@dataclass(frozen=True)
class EditCounts:
    s: int = 0
    d: int = 0
    i: int = 0
    c: int = 0

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(self.s + other.s, self.d + other.d, self.i + other.i, self.c + other.c)

    @property
    def errors(self) -> int:
        return self.s + self.d + self.i

    @property
    def ref_len(self) -> int:
        return self.s + self.d + self.c

    @property
    def hyp_len(self) -> int:
        return self.s + self.i + self.c


def _distance_table(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> list[list[int]]:
    n, m = len(ref), len(hyp)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        table[i][0] = i
    for j in range(1, m + 1):
        table[0][j] = j
    for i in range(1, n + 1):
        row, prev = table[i], table[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            cost = 0 if r == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, prev[j] + 1, row[j - 1] + 1)
    return table


def align(ref: Sequence[Hashable], hyp: Sequence[Hashable], mirrored: bool = False) -> EditCounts:
    """Count substitutions, deletions, insertions and matches of a minimal alignment.

    The backtrace runs from the end of both sequences and, among moves that stay
    on an optimal path, prefers match > substitution > deletion > insertion.
    ``mirrored=True`` swaps the last two (insertion before deletion), which
    makes ``align(b, a, mirrored=True)`` the exact transpose of ``align(a, b)``.
    """
    table = _distance_table(ref, hyp)
    s = d = ins = c = 0
    i, j = len(ref), len(hyp)
    while i > 0 or j > 0:
        here = table[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and table[i - 1][j - 1] == here:
            c += 1
            i -= 1
            j -= 1
            continue
        if i > 0 and j > 0 and ref[i - 1] != hyp[j - 1] and table[i - 1][j - 1] + 1 == here:
            s += 1
            i -= 1
            j -= 1
            continue
        can_del = i > 0 and table[i - 1][j] + 1 == here
        can_ins = j > 0 and table[i][j - 1] + 1 == here
        if can_del and (not mirrored or not can_ins):
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(s=s, d=d, i=ins, c=c)


def cer(counts: EditCounts) -> float:
    """Error rate with matches in the denominator; 0 for all-zero counts."""
    total = counts.errors + counts.c
    if total == 0:
        return 0.0
    return counts.errors / total


def cer_standard(counts: EditCounts) -> float:
    if counts.ref_len == 0:
        raise EmptyReferenceError("reference is empty; standard CER undefined")
    return counts.errors / counts.ref_len


def word_counts(ref_text: str, hyp_text: str) -> EditCounts:
    return align(ref_text.split(), hyp_text.split())


def wer(ref_text: str, hyp_text: str) -> float:
    counts = word_counts(ref_text, hyp_text)
    if counts.ref_len == 0:
        raise EmptyReferenceError("reference contains no words")
    return counts.errors / counts.ref_len


def full_match_accuracy(pairs: Iterable[tuple[str, str]]) -> float:
    """Fraction of ``(hyp, ref)`` pairs that are identical after normalization."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("no pairs to score")
    hits = sum(normalize(hyp) == normalize(ref) for hyp, ref in pairs)
    return hits / len(pairs)


@dataclass(frozen=True)
class MetricReport:
    cer_paper: float
    cer_standard: float
    wer_standard: float
    pair_count: int
    full_match: float | None = None
    failure_count: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate_corpus(pairs: Iterable[tuple[str, str]], word_level: bool = False) -> MetricReport:
    """Micro-averaged metrics over ``(hyp, ref)`` pairs.

    Edit counts are pooled over the corpus before dividing, so long lines
    weigh more than short ones.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("no pairs to score")
    chars = EditCounts()
    words = EditCounts()
    for hyp, ref in pairs:
        chars = chars + align(ref, hyp)
        words = words + word_counts(ref, hyp)
    if words.ref_len == 0:
        raise EmptyReferenceError("corpus references contain no words")
    return MetricReport(
        cer_paper=cer(chars),
        cer_standard=cer_standard(chars),
        wer_standard=words.errors / words.ref_len,
        pair_count=len(pairs),
        full_match=full_match_accuracy(pairs) if word_level else None,
    )
