"""Cosine similarity, score-to-rank conversion, and Spearman correlation.

Ranks are fractional: rank 1 goes to the highest score and tied scores
share the average of the ranks they span, so the rank sum is always
n(n+1)/2. The rank correlation uses the classic closed form

    rho = 1 - 6 * sum(d_i^2) / (n * (n^2 - 1))

when both rankings are tie-free, and the Pearson correlation of the
fractional rank vectors otherwise (the two coincide in the tie-free
case, which the test suite verifies against each other).
"""

from __future__ import annotations

import math
from typing import Hashable, Sequence

import numpy as np

from .errors import (
    DegenerateInput,
    DimensionMismatch,
    EmptyInput,
    ItemSetMismatch,
    NonFiniteScore,
    ZeroNorm,
)

_NORM_FLOOR = 1e-12


class RankTable:
    """Fractional ranks over a set of unique items; rank 1 = highest score."""

    __slots__ = ("items", "ranks")

    def __init__(self, items: Sequence[Hashable], ranks):
        ranks_arr = np.asarray(ranks, dtype=np.float64)
        items_list = list(items)
        if len(items_list) != ranks_arr.shape[0] or ranks_arr.ndim != 1:
            raise ValueError("items and ranks must be parallel 1-D sequences")
        if len(set(items_list)) != len(items_list):
            raise ValueError("rank table items must be unique")
        n = len(items_list)
        expected = n * (n + 1) / 2.0
        if abs(float(ranks_arr.sum()) - expected) > 1e-9:
            raise ValueError(
                f"ranks must sum to n(n+1)/2 = {expected}, got {ranks_arr.sum()}"
            )
        ranks_arr.setflags(write=False)
        self.items = items_list
        self.ranks = ranks_arr

    @property
    def n(self) -> int:
        return len(self.items)

    def rank_of(self, item: Hashable) -> float:
        return float(self.ranks[self.items.index(item)])

    def as_dict(self) -> dict:
        return {item: float(rank) for item, rank in zip(self.items, self.ranks)}

    @property
    def tie_free(self) -> bool:
        return len(np.unique(self.ranks)) == self.n

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RankTable):
            return NotImplemented
        return self.items == other.items and np.array_equal(self.ranks, other.ranks)

    def __repr__(self) -> str:
        return f"RankTable(n={self.n})"


def rank_by_score(
    scores: Sequence[tuple[Hashable, float]], descending: bool = True
) -> RankTable:
    """Convert (item, score) pairs into fractional ranks.

    Rank 1 is the largest score (``descending=True``, the default). Tied
    scores receive the average of the rank positions they occupy, so the
    result never depends on input order.

    Raises:
        EmptyInput: no scores given.
        NonFiniteScore: a score is NaN or infinite.
        ValueError: duplicate item ids.
    """
    if len(scores) == 0:
        raise EmptyInput("cannot rank an empty score list")
    items = [item for item, _ in scores]
    if len(set(items)) != len(items):
        raise ValueError("duplicate items in score list")
    values = np.asarray([value for _, value in scores], dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NonFiniteScore(f"score for item {items[bad]!r} is not finite")

    n = values.shape[0]
    keyed = -values if descending else values
    order = np.argsort(keyed, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    position = 0
    while position < n:
        end = position
        while end + 1 < n and keyed[order[end + 1]] == keyed[order[position]]:
            end += 1
        # positions are 1-based; tied run [position, end] shares the mean.
        average = (position + end) / 2.0 + 1.0
        ranks[order[position : end + 1]] = average
        position = end + 1
    return RankTable(items, ranks)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Accepts :class:`~matrank.providers.EmbeddingVector` or any 1-D array.

    Raises:
        DimensionMismatch: different lengths.
        ZeroNorm: either vector has Euclidean norm below 1e-12.
    """
    va = np.asarray(getattr(a, "values", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise DimensionMismatch(f"cannot compare shapes {va.shape} and {vb.shape}")
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a <= _NORM_FLOOR or norm_b <= _NORM_FLOOR:
        raise ZeroNorm("cosine similarity is undefined for a zero-norm vector")
    value = float(np.dot(va, vb)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


def _aligned_ranks(x: RankTable, y: RankTable) -> tuple[np.ndarray, np.ndarray]:
    if set(x.items) != set(y.items):
        missing = set(x.items) ^ set(y.items)
        raise ItemSetMismatch(
            f"rank tables cover different items ({len(missing)} differ)"
        )
    y_ranks = y.as_dict()
    return x.ranks, np.asarray([y_ranks[item] for item in x.items], dtype=np.float64)


def spearman_rho(x: RankTable, y: RankTable) -> float:
    """Spearman rank correlation between two rank tables.

    Tie-free tables use the closed form 1 - 6*sum(d^2)/(n(n^2-1)); with
    ties present the Pearson correlation of the fractional rank vectors
    is used instead. Identical rankings give exactly 1.0 and exactly
    reversed rankings give exactly -1.0.

    Raises:
        ItemSetMismatch: the tables cover different items.
        DegenerateInput: fewer than two items, or all ranks tied in
            either table (correlation undefined, never reported as 0).
    """
    rx, ry = _aligned_ranks(x, y)
    n = rx.shape[0]
    if n < 2:
        raise DegenerateInput("rank correlation needs at least two items")
    if np.ptp(rx) == 0.0 or np.ptp(ry) == 0.0:
        raise DegenerateInput("all ranks tied; correlation is undefined")

    if x.tie_free and y.tie_free:
        d = rx - ry
        rho = 1.0 - 6.0 * float(np.dot(d, d)) / (n * (n * n - 1.0))
    else:
        dx = rx - rx.mean()
        dy = ry - ry.mean()
        rho = float(np.dot(dx, dy)) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    return max(-1.0, min(1.0, rho))
