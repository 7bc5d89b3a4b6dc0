"""
Bipartite interaction graph models.

Node layout: users occupy [0, n_users), items [n_users, n_users + n_items).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import FrozenSet, List, Tuple

import numpy as np
import scipy.sparse as sp

from augmentation.models import AugmentedEdgeSet


class GraphError(Exception):
    """Base class for graph-core failures"""

    pass


class DuplicateEdgeError(GraphError):
    """Raised when an augmented edge already exists in the observed graph"""

    pass


class InvalidQuantileError(GraphError):
    """Raised when a degree quantile falls outside (0, 1]"""

    pass


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    """
    Immutable bipartite graph over dense user/item indices.

    `users` and `items` are parallel edge arrays sorted by (user, item);
    degrees are derived from them.
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    graph_id: str = "train"

    def __post_init__(self):
        if len(self.users) != len(self.items):
            raise GraphError("Edge arrays must have equal length")
        if len(self.users) and (
            self.users.min() < 0
            or self.users.max() >= self.n_users
            or self.items.min() < 0
            or self.items.max() >= self.n_items
        ):
            raise GraphError("Edge endpoint outside the node range")

    @property
    def n_nodes(self) -> int:
        return self.n_users + self.n_items

    @property
    def n_edges(self) -> int:
        return len(self.users)

    @cached_property
    def edges(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset(zip(self.users.tolist(), self.items.tolist()))

    @cached_property
    def degree_u(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users).astype(np.int64)

    @cached_property
    def degree_i(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items).astype(np.int64)

    @cached_property
    def interaction_matrix(self) -> sp.csr_matrix:
        """Binary R (n_users x n_items)."""
        data = np.ones(self.n_edges, dtype=np.float64)
        return sp.csr_matrix(
            (data, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )

    @cached_property
    def _user_item_lists(self) -> List[np.ndarray]:
        matrix = self.interaction_matrix
        return [
            matrix.indices[matrix.indptr[u] : matrix.indptr[u + 1]].copy()
            for u in range(self.n_users)
        ]

    def user_items(self, user_index: int) -> np.ndarray:
        """Sorted item indices the user interacted with."""
        return self._user_item_lists[user_index]

    def has_edge(self, user_index: int, item_index: int) -> bool:
        return (user_index, item_index) in self.edges


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """
    Symmetric |V| x |V| operator with entry 1/sqrt(deg_u * deg_i) per edge.
    """

    matrix: sp.csr_matrix
    n_users: int
    n_items: int
    adjacency_id: str = "train"

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True, eq=False)
class AugmentedGraph:
    """G_aug: the observed graph plus E_new, with its own adjacency over E+"""

    base: InteractionGraph
    new_edges: AugmentedEdgeSet
    graph: InteractionGraph
    adjacency: NormalizedAdjacency = field(repr=False, default=None)

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges
