"""Text-accuracy metrics: edit distance, character error rate, gestalt ratio."""

from __future__ import annotations

from typing import Hashable, Sequence

from .errors import EmptyReference


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimal number of substitutions, insertions and deletions.

    Two-row dynamic programming; memory is O(min(|a|, |b|)).
    """
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, item_a in enumerate(a, start=1):
        current = [i]
        for j, item_b in enumerate(b, start=1):
            cost = 0 if item_a == item_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def cer(hypothesis: str, reference: str) -> float:
    """Character error rate: edit distance over reference length.

    Unbounded above; misplaced-but-correct text can push it past 1.0.
    """
    if not reference:
        raise EmptyReference("reference text is empty; CER is undefined")
    return levenshtein(hypothesis, reference) / len(reference)


def _longest_blocks(
    a: Sequence, b2j: dict, alo: int, ahi: int, blo: int, bhi: int
) -> tuple[int, list[tuple[int, int]]]:
    """All starts of the longest common contiguous runs inside the region."""
    best = 0
    blocks: list[tuple[int, int]] = []
    j2len: dict[int, int] = {}
    for i in range(alo, ahi):
        new_j2len: dict[int, int] = {}
        for j in b2j.get(a[i], ()):
            if j < blo:
                continue
            if j >= bhi:
                break
            k = j2len.get(j - 1, 0) + 1
            new_j2len[j] = k
            if k > best:
                best = k
                blocks = [(i - k + 1, j - k + 1)]
            elif k == best:
                blocks.append((i - k + 1, j - k + 1))
        j2len = new_j2len
    return best, blocks


def _gestalt_matches(a: Sequence, b: Sequence) -> int:
    """M for the gestalt ratio: recursive longest-common-block splitting,
    maximized over tied longest blocks.

    Taking the maximum (rather than an arbitrary tie-break) is what makes
    the ratio symmetric; a first-found tie-break is order-dependent.
    """
    b2j: dict[Hashable, list[int]] = {}
    for j, item in enumerate(b):
        b2j.setdefault(item, []).append(j)
    memo: dict[tuple[int, int, int, int], int] = {}

    def recurse(alo: int, ahi: int, blo: int, bhi: int) -> int:
        if alo >= ahi or blo >= bhi:
            return 0
        key = (alo, ahi, blo, bhi)
        cached = memo.get(key)
        if cached is not None:
            return cached
        size, blocks = _longest_blocks(a, b2j, alo, ahi, blo, bhi)
        if size == 0:
            memo[key] = 0
            return 0
        best = 0
        for i, j in blocks:
            total = size + recurse(alo, i, blo, j) + recurse(i + size, ahi, j + size, bhi)
            if total > best:
                best = total
        memo[key] = best
        return best

    return recurse(0, len(a), 0, len(b))


def ro_ratio(a: Sequence, b: Sequence) -> float:
    """Gestalt similarity 2M/(|a|+|b|), order-sensitive, in [0, 1].

    M comes from recursive longest-common-contiguous-block splitting
    (Ratcliff-Obershelp); ratio(x, x) = 1, disjoint sequences score 0 and a
    pair of empty sequences scores 1.0 by convention. Elements must be
    hashable and comparable for equality.
    """
    total = len(a) + len(b)
    if total == 0:
        return 1.0
    return 2.0 * _gestalt_matches(a, b) / total
