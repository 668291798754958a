from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


@dataclass(frozen=True)
class WerResult:
    sub: int
    dele: int
    ins: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins

    @property
    def rate(self) -> Fraction:
        return Fraction(self.errors, self.ref_len)

    def __float__(self) -> float:
        return self.errors / self.ref_len


def edit_counts(reference: Sequence, hypothesis: Sequence) -> tuple[int, int, int]:
    """(substitutions, deletions, insertions) of one minimum unit-cost alignment.

    On backtrace ties a diagonal step is preferred, then a deletion.
    """
    n, m = len(reference), len(hypothesis)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = reference[i - 1]
        row, up = d[i], d[i - 1]
        for j in range(1, m + 1):
            diag = up[j - 1] + (ri != hypothesis[j - 1])
            row[j] = min(diag, up[j] + 1, row[j - 1] + 1)
    sub = dele = ins = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (reference[i - 1] != hypothesis[j - 1]):
            sub += reference[i - 1] != hypothesis[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return sub, dele, ins


def wer(reference: Sequence, hypothesis: Sequence) -> WerResult:
    if len(reference) == 0:
        raise ValueError("WER is undefined for an empty reference")
    s, d, i = edit_counts(reference, hypothesis)
    return WerResult(s, d, i, len(reference))


def corpus_wer(pairs: Iterable[tuple[Sequence, Sequence]]) -> WerResult:
    """Pool counts over many (reference, hypothesis) pairs."""
    s = d = i = n = 0
    for ref, hyp in pairs:
        r = wer(ref, hyp)
        s, d, i, n = s + r.sub, d + r.dele, i + r.ins, n + r.ref_len
    if n == 0:
        raise ValueError("WER is undefined for an empty reference")
    return WerResult(s, d, i, n)
