"""
Uniform BPR triple sampling with rejection-sampled negatives.
"""

import logging

import numpy as np

from graphs.models import InteractionGraph

from .models import SamplingError, TripleBatch

logger = logging.getLogger(__name__)

MAX_REJECTION_ROUNDS = 100


def _is_observed(graph: InteractionGraph, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    if len(users) == 0:
        return np.zeros(0, dtype=bool)
    return np.asarray(graph.interaction_matrix[users, items]).ravel() > 0


def sample_batch(
    graph: InteractionGraph,
    batch_size: int,
    rng: np.random.Generator,
    max_rounds: int = MAX_REJECTION_ROUNDS,
) -> TripleBatch:
    """
    Draw `batch_size` triples: positives uniform over E, one negative per
    positive uniform over the user's non-interacted items.

    Edges of users who interacted with every item cannot yield a negative
    and are skipped (positives are drawn from the remaining edges).

    Raises:
        SamplingError: fewer than 1 edge or 2 items, no user with a
            negative, or rejection sampling exhausted `max_rounds`
    """
    if graph.n_edges < 1 or graph.n_items < 2:
        raise SamplingError(
            f"Sampling needs >= 1 edge and >= 2 items "
            f"(got {graph.n_edges} edges, {graph.n_items} items)"
        )
    if batch_size < 1:
        raise SamplingError(f"batch_size must be >= 1, got {batch_size}")

    saturated = graph.degree_u[graph.users] >= graph.n_items
    eligible_edges = np.flatnonzero(~saturated)
    if len(eligible_edges) == 0:
        error_msg = "Every user interacted with every item; no negatives exist"
        logger.error(error_msg)
        raise SamplingError(error_msg)

    picks = eligible_edges[rng.integers(0, len(eligible_edges), size=batch_size)]
    users = graph.users[picks]
    pos_items = graph.items[picks]

    neg_items = rng.integers(0, graph.n_items, size=batch_size)
    pending = np.flatnonzero(_is_observed(graph, users, neg_items))
    rounds = 0
    while len(pending):
        rounds += 1
        if rounds > max_rounds:
            error_msg = (
                f"Negative sampling failed for {len(pending)} triples "
                f"after {max_rounds} rounds"
            )
            logger.error(error_msg)
            raise SamplingError(error_msg)
        neg_items[pending] = rng.integers(0, graph.n_items, size=len(pending))
        still = _is_observed(graph, users[pending], neg_items[pending])
        pending = pending[still]

    return TripleBatch(
        users=users.astype(np.int64),
        pos_items=pos_items.astype(np.int64),
        neg_items=neg_items.astype(np.int64),
        n_users=graph.n_users,
    )
