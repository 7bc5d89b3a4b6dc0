"""
Embedding data models.

Node layout: rows [0, n_users) are users, rows [n_users, n_users + n_items)
are items.
"""

from dataclasses import dataclass, field
from typing import List

import numpy as np


class EmbeddingError(Exception):
    """Base class for embedding-engine failures"""

    pass


class EmbeddingIndexError(EmbeddingError, IndexError):
    """Raised when a user or item index is outside the matrix"""

    pass


@dataclass
class EmbeddingMatrix:
    """
    Dense |V| x d embedding matrix.

    layer_tag records which propagation layer produced the values (0 for
    E(0) and for pooled outputs).
    """

    values: np.ndarray
    n_users: int = 0
    layer_tag: int = 0

    def __post_init__(self):
        if self.values.ndim != 2:
            raise EmbeddingError(f"Embedding matrix must be 2-D, got {self.values.shape}")
        if not 0 <= self.n_users <= self.values.shape[0]:
            raise EmbeddingError(
                f"n_users={self.n_users} outside [0, {self.values.shape[0]}]"
            )

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_items(self) -> int:
        return self.n_nodes - self.n_users

    @property
    def users(self) -> np.ndarray:
        return self.values[: self.n_users]

    @property
    def items(self) -> np.ndarray:
        return self.values[self.n_users :]

    def user_row(self, user_index: int) -> np.ndarray:
        if not 0 <= user_index < self.n_users:
            raise EmbeddingIndexError(f"user index {user_index} out of range [0, {self.n_users})")
        return self.values[user_index]

    def item_row(self, item_index: int) -> np.ndarray:
        if not 0 <= item_index < self.n_items:
            raise EmbeddingIndexError(f"item index {item_index} out of range [0, {self.n_items})")
        return self.values[self.n_users + item_index]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass
class LayerStack:
    """[E(0), E(1), ..., E(L)] produced by propagating over one adjacency"""

    layers: List[EmbeddingMatrix] = field(default_factory=list)
    adjacency_id: str = ""

    @property
    def n_layers(self) -> int:
        """L (the stack holds L + 1 matrices)."""
        return len(self.layers) - 1

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, index):
        return self.layers[index]


@dataclass(frozen=True)
class CandidateList:
    """
    Retrieval shortlist I_can for one user, best first.

    truncated is set when fewer than K items were eligible.
    """

    items: List[int]
    scores: List[float]
    truncated: bool = False

    def __len__(self):
        return len(self.items)
