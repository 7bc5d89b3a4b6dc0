"""
Graph-core services.

- build_graph: bipartite graph from an interaction log
- normalized_adjacency: symmetric degree normalization (no self-loops)
- low_degree_users: nearest-rank degree quantile selection
- merge_augmented: E+ = E u E_new with recomputed normalization
"""

import logging
import math
from typing import Iterable, Optional, Set, Tuple

import numpy as np
import scipy.sparse as sp

from augmentation.models import AugmentedEdgeSet
from interactions.models import InteractionLog

from .models import (
    AugmentedGraph,
    DuplicateEdgeError,
    GraphError,
    InteractionGraph,
    InvalidQuantileError,
    NormalizedAdjacency,
)

logger = logging.getLogger(__name__)


def graph_from_pairs(
    n_users: int,
    n_items: int,
    pairs: Iterable[Tuple[int, int]],
    graph_id: str = "train",
) -> InteractionGraph:
    """Build a graph from (user_index, item_index) pairs; duplicates collapse."""
    unique = sorted(set((int(u), int(i)) for u, i in pairs))
    users = np.fromiter((u for u, _ in unique), dtype=np.int64, count=len(unique))
    items = np.fromiter((i for _, i in unique), dtype=np.int64, count=len(unique))
    return InteractionGraph(
        n_users=n_users, n_items=n_items, users=users, items=items, graph_id=graph_id
    )


def build_graph(log: InteractionLog, graph_id: str = "train") -> InteractionGraph:
    """
    One edge per unique (user, item) of the log.

    The node counts come from the log's id table, so users or items that
    only appear in validation/test stay as isolated nodes.
    """
    graph = graph_from_pairs(log.ids.n_users, log.ids.n_items, log.index_pairs(), graph_id)
    logger.info(
        f"Built graph '{graph_id}': {graph.n_users} users, {graph.n_items} items, "
        f"{graph.n_edges} edges"
    )
    return graph


def normalized_adjacency(graph: InteractionGraph) -> NormalizedAdjacency:
    """
    Ã with entry (u, n_users + i) = 1/sqrt(deg_u * deg_i), mirrored.

    Isolated nodes have empty rows; the diagonal is empty.
    """
    n_users, n_nodes = graph.n_users, graph.n_nodes

    if graph.n_edges:
        weights = 1.0 / np.sqrt(
            graph.degree_u[graph.users].astype(np.float64)
            * graph.degree_i[graph.items].astype(np.float64)
        )
    else:
        weights = np.zeros(0, dtype=np.float64)

    rows = np.concatenate([graph.users, graph.items + n_users])
    cols = np.concatenate([graph.items + n_users, graph.users])
    data = np.concatenate([weights, weights])
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
    matrix.sort_indices()

    return NormalizedAdjacency(
        matrix=matrix,
        n_users=graph.n_users,
        n_items=graph.n_items,
        adjacency_id=graph.graph_id,
    )


def degree_threshold(degrees: np.ndarray, quantile: float) -> int:
    """Nearest-rank quantile of a degree multiset."""
    ordered = np.sort(np.asarray(degrees))
    # round() keeps q*n = 2.0000000000000004 from jumping a rank
    rank = max(1, math.ceil(round(quantile * len(ordered), 9)))
    return int(ordered[rank - 1])


def low_degree_users(graph: InteractionGraph, quantile: float) -> Set[int]:
    """
    Users whose degree is at or below the nearest-rank Q_alpha quantile.

    Raises:
        InvalidQuantileError: quantile outside (0, 1]
        GraphError: graph without users
    """
    if not 0.0 < quantile <= 1.0:
        error_msg = f"quantile must be in (0, 1], got {quantile}"
        logger.error(error_msg)
        raise InvalidQuantileError(error_msg)
    if graph.n_users == 0:
        raise GraphError("Cannot select low-degree users from a graph without users")

    threshold = degree_threshold(graph.degree_u, quantile)
    selected = set(np.flatnonzero(graph.degree_u <= threshold).tolist())
    logger.info(
        f"Low-degree users at q={quantile}: threshold={threshold}, "
        f"{len(selected)}/{graph.n_users} selected"
    )
    return selected


def merge_augmented(
    graph: InteractionGraph,
    new_edges: AugmentedEdgeSet,
    graph_id: Optional[str] = None,
) -> AugmentedGraph:
    """
    Merge E_new into the observed graph; augmented edges count as real edges
    for degree normalization.

    Raises:
        DuplicateEdgeError: a new edge is already observed (or repeated)
    """
    seen = set()
    for edge in new_edges:
        if graph.has_edge(edge.user_index, edge.item_index) or edge.pair in seen:
            error_msg = (
                f"edge already observed: user {edge.user_index}, item {edge.item_index}"
            )
            logger.error(error_msg)
            raise DuplicateEdgeError(error_msg)
        if not (0 <= edge.user_index < graph.n_users and 0 <= edge.item_index < graph.n_items):
            raise GraphError(f"Augmented edge {edge.pair} outside the node range")
        seen.add(edge.pair)

    pairs = list(zip(graph.users.tolist(), graph.items.tolist())) + list(seen)
    merged = graph_from_pairs(
        graph.n_users, graph.n_items, pairs, graph_id or f"{graph.graph_id}+aug"
    )
    logger.info(
        f"Merged {len(new_edges)} augmented edges: |E|={graph.n_edges} -> "
        f"|E+|={merged.n_edges}"
    )
    return AugmentedGraph(
        base=graph,
        new_edges=new_edges,
        graph=merged,
        adjacency=normalized_adjacency(merged),
    )
