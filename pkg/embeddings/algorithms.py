"""
Retrieval over trained embeddings.

- top_k_candidates: I_can, the K best non-interacted items of a user
- similar_users: cosine nearest neighbours in user space

Ties are broken by ascending index everywhere.
"""

import logging
from typing import List

import numpy as np

from graphs.models import InteractionGraph

from .models import CandidateList, EmbeddingError, EmbeddingIndexError, EmbeddingMatrix

logger = logging.getLogger(__name__)


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """Positions sorted by descending score, ascending position on ties."""
    return np.lexsort((np.arange(len(scores)), -scores))


def top_k_candidates(
    E: EmbeddingMatrix, graph: InteractionGraph, u: int, K: int
) -> CandidateList:
    """
    The K highest-scoring items the user has not interacted with in train.

    With fewer than K eligible items every eligible item is returned and
    the list is flagged as truncated.
    """
    if K < 1:
        raise EmbeddingError(f"K must be >= 1, got {K}")
    if not 0 <= u < E.n_users:
        raise EmbeddingIndexError(f"user index {u} out of range [0, {E.n_users})")

    scores = E.items @ E.user_row(u)
    eligible = np.ones(E.n_items, dtype=bool)
    eligible[graph.user_items(u)] = False
    eligible_items = np.flatnonzero(eligible)

    order = eligible_items[rank_descending(scores[eligible_items])][:K]
    truncated = len(order) < K
    if truncated:
        logger.warning(
            f"User {u}: only {len(order)} eligible candidates (requested {K})"
        )

    return CandidateList(
        items=order.tolist(),
        scores=scores[order].tolist(),
        truncated=truncated,
    )


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0.0:
        return float("-inf")
    return float(np.dot(a, b) / norm)


def cosine_similarities(E: EmbeddingMatrix, u: int) -> np.ndarray:
    """Cosine of user u against every user; zero-norm rows get -inf."""
    users = E.users
    target = E.user_row(u)
    norms = np.linalg.norm(users, axis=1)
    target_norm = np.linalg.norm(target)

    similarities = np.full(E.n_users, -np.inf)
    if target_norm == 0.0:
        return similarities
    valid = norms > 0.0
    similarities[valid] = (users[valid] @ target) / (norms[valid] * target_norm)
    return similarities


def similar_users(E: EmbeddingMatrix, u: int, m: int) -> List[int]:
    """Top-m users by cosine similarity to u, excluding u."""
    if m < 1:
        raise EmbeddingError(f"m must be >= 1, got {m}")

    similarities = cosine_similarities(E, u)
    order = [v for v in rank_descending(similarities).tolist() if v != u]
    return order[:m]
