"""
Reciprocal rank fusion and top-p selection.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from .models import EnsembleError, InvalidPermutationError, Permutation, RrfScores

logger = logging.getLogger(__name__)


def reciprocal_rank(ranks):
    """g(x) = 1 / (x + 1) for 0-indexed ranks."""
    return 1.0 / (np.asarray(ranks, dtype=np.float64) + 1.0)


def _as_permutation(perm) -> Permutation:
    if isinstance(perm, Permutation):
        return perm
    return Permutation(tuple(perm))


def rank_histogram(perms: Sequence[Permutation]) -> np.ndarray:
    """counts[slot, rank] = number of permutations placing `slot` at `rank`."""
    if not perms:
        raise EnsembleError("Cannot aggregate an empty list of permutations")
    perms = [_as_permutation(p) for p in perms]
    K = perms[0].K
    if any(p.K != K for p in perms):
        raise InvalidPermutationError("All permutations must rank the same K candidates")

    ranks = np.array([p.ranks for p in perms], dtype=np.int64)
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (np.tile(np.arange(K), len(perms)), ranks.ravel()), 1)
    return counts


def rrf_scores(perms: Sequence[Permutation]) -> RrfScores:
    """
    S(i) = Σ_n 1 / (rank_n(i) + 1).

    Scores are computed from the integer rank histogram, so the result does
    not depend on the order of `perms`.
    """
    counts = rank_histogram(perms)
    scores = counts.astype(np.float64) @ reciprocal_rank(np.arange(counts.shape[1]))
    return RrfScores(scores=scores, votes=len(perms))


def select_top_p(
    scores: RrfScores, p: int, candidate_order: Optional[Sequence[int]] = None
) -> List[int]:
    """
    p slots by descending score; ties go to the slot earlier in the
    retrieval candidate order (slot order when omitted).
    """
    K = scores.K
    if not 1 <= p <= K:
        raise EnsembleError(f"p must be in [1, {K}], got {p}")

    order = list(range(K)) if candidate_order is None else [int(s) for s in candidate_order]
    if sorted(order) != list(range(K)):
        raise EnsembleError("candidate_order must list every slot exactly once")
    position = {slot: index for index, slot in enumerate(order)}

    ranked = sorted(range(K), key=lambda slot: (-scores.scores[slot], position[slot]))
    return ranked[:p]
