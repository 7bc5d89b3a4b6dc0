"""
Embedding engine: initialization, LightGCN propagation, pooling and scoring.
"""

import logging

import numpy as np

from graphs.models import NormalizedAdjacency

from .models import EmbeddingError, EmbeddingMatrix, LayerStack

logger = logging.getLogger(__name__)

INIT_STD = 0.1

POOLING_MEAN = "mean"
POOLING_LAST = "last"
POOLING_MODES = (POOLING_MEAN, POOLING_LAST)


def init_embeddings(n_nodes: int, d: int, seed: int, n_users: int = 0) -> EmbeddingMatrix:
    """
    E(0) with entries i.i.d. N(0, 0.1^2), deterministic given seed.

    Raises:
        EmbeddingError: d < 1 or negative node count
    """
    if d < 1:
        raise EmbeddingError(f"Embedding dimension must be >= 1, got {d}")
    if n_nodes < 0:
        raise EmbeddingError(f"Node count must be >= 0, got {n_nodes}")

    rng = np.random.default_rng(seed)
    values = rng.normal(loc=0.0, scale=INIT_STD, size=(n_nodes, d))
    return EmbeddingMatrix(values=values, n_users=n_users, layer_tag=0)


def propagate(E0: EmbeddingMatrix, adj: NormalizedAdjacency, L: int) -> LayerStack:
    """
    [E(0), Ã E(0), ..., Ã^L E(0)]: linear aggregation, no self-term.

    The sparse product accumulates each row over its sorted column indices,
    so results do not depend on scheduling.
    """
    if L < 0:
        raise EmbeddingError(f"Layer count must be >= 0, got {L}")
    if adj.shape[0] != E0.n_nodes:
        raise EmbeddingError(
            f"Adjacency has {adj.shape[0]} nodes but embeddings have {E0.n_nodes} rows"
        )

    layers = [E0]
    current = E0.values
    for layer in range(1, L + 1):
        current = np.asarray(adj.matrix @ current)
        layers.append(EmbeddingMatrix(values=current, n_users=E0.n_users, layer_tag=layer))

    return LayerStack(layers=layers, adjacency_id=adj.adjacency_id)


def mean_pool(stack: LayerStack) -> EmbeddingMatrix:
    """(1 / (L + 1)) * sum of all layers."""
    if len(stack) == 0:
        raise EmbeddingError("Cannot pool an empty layer stack")
    total = np.zeros_like(stack[0].values)
    for layer in stack.layers:
        total = total + layer.values
    return EmbeddingMatrix(
        values=total / len(stack), n_users=stack[0].n_users, layer_tag=0
    )


def last_layer(stack: LayerStack) -> EmbeddingMatrix:
    if len(stack) == 0:
        raise EmbeddingError("Cannot take the last layer of an empty stack")
    return stack.layers[-1]


def pool(stack: LayerStack, mode: str) -> EmbeddingMatrix:
    if mode == POOLING_MEAN:
        return mean_pool(stack)
    if mode == POOLING_LAST:
        return last_layer(stack)
    raise EmbeddingError(f"Unknown pooling mode: {mode!r}")


def score(E: EmbeddingMatrix, u: int, i: int) -> float:
    """ŷ_ui = e_u . e_i"""
    return float(np.dot(E.user_row(u), E.item_row(i)))
