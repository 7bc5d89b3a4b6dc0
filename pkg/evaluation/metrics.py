"""
Top-K ranking metrics under leave-one-out evaluation.

recs:  user_index -> ordered recommended item indices
truth: user_index -> set of relevant item indices (a singleton here)

Means are taken over the users in `truth`; a user without a list counts as a
miss.
"""

import math
from typing import Dict, Iterable, Mapping, Optional, Sequence, Set

import numpy as np

from graphs.models import InteractionGraph

from .models import EvaluationError, LongTailSet

DEFAULT_HEAD_FRACTION = 0.2


def _check_cutoff(K: int):
    if K < 1:
        raise EvaluationError(f"cutoff K must be >= 1, got {K}")


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0


def recall_at_k(
    recs: Mapping[int, Sequence[int]], truth: Mapping[int, Set[int]], K: int
) -> float:
    _check_cutoff(K)
    per_user = []
    for u, relevant in truth.items():
        if not relevant:
            continue
        hits = len(set(recs.get(u, ())[:K]) & set(relevant))
        per_user.append(hits / len(relevant))
    return _mean(per_user)


def dcg(ranked: Sequence[int], relevant: Set[int], K: int) -> float:
    """Sum of 1/log2(i+1) over 1-indexed hit positions i <= K."""
    return sum(
        1.0 / math.log2(position + 1)
        for position, item in enumerate(ranked[:K], start=1)
        if item in relevant
    )


def ndcg_at_k(
    recs: Mapping[int, Sequence[int]], truth: Mapping[int, Set[int]], K: int
) -> float:
    _check_cutoff(K)
    per_user = []
    for u, relevant in truth.items():
        if not relevant:
            continue
        ideal = sum(1.0 / math.log2(position + 1) for position in range(1, min(len(relevant), K) + 1))
        per_user.append(dcg(recs.get(u, ()), set(relevant), K) / ideal)
    return _mean(per_user)


def long_tail_set(graph: InteractionGraph, head_fraction: float = DEFAULT_HEAD_FRACTION) -> LongTailSet:
    """
    Items outside the ceil(head_fraction * n_items) most popular ones.

    Popularity is the train degree; ties go to the lower item index.
    """
    if not 0.0 < head_fraction <= 1.0:
        raise EvaluationError(f"head_fraction must be in (0, 1], got {head_fraction}")
    n_items = graph.n_items
    if n_items == 0:
        return LongTailSet(items=frozenset(), head_fraction=head_fraction)

    popularity = graph.degree_i
    by_popularity = np.lexsort((np.arange(n_items), -popularity))
    head_size = max(1, math.ceil(round(head_fraction * n_items, 9)))
    return LongTailSet(
        items=frozenset(by_popularity[head_size:].tolist()), head_fraction=head_fraction
    )


def aplt_at_k(
    recs: Mapping[int, Sequence[int]],
    gamma: LongTailSet,
    K: int,
    users: Optional[Iterable[int]] = None,
) -> float:
    """Mean share of long-tail items per list; an empty list contributes 0."""
    _check_cutoff(K)
    per_user = []
    for u in users if users is not None else recs.keys():
        top = list(recs.get(u, ()))[:K]
        if not top:
            per_user.append(0.0)
            continue
        per_user.append(sum(1 for item in top if item in gamma) / len(top))
    return _mean(per_user)


def truth_sets(mapping: Dict[int, int]) -> Dict[int, Set[int]]:
    return {u: {item} for u, item in mapping.items()}
