"""
Augmentation data models: synthesized edges E_new, per-user skip records and
the augmentation configuration.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional

from django.conf import settings


class AugmentationError(Exception):
    """Base class for augmentation-pipeline failures"""

    pass


class AugmentationConfigError(AugmentationError):
    """Raised when an AugmentationConfig violates its invariants"""

    pass


@dataclass(frozen=True, order=True)
class AugmentedEdge:
    """One synthesized interaction with its RRF score and vote count"""

    user_index: int
    item_index: int
    rrf_score: float = 0.0
    votes: int = 0

    @property
    def pair(self):
        return (self.user_index, self.item_index)


class AugmentedEdgeSet:
    """
    Ordered collection of augmented edges (E_new).

    Edges are kept sorted by (user_index, item_index).
    """

    def __init__(self, edges: Iterable[AugmentedEdge] = ()):
        self._edges: List[AugmentedEdge] = sorted(edges, key=lambda e: e.pair)

    def __iter__(self):
        return iter(self._edges)

    def __len__(self):
        return len(self._edges)

    def __getitem__(self, index):
        return self._edges[index]

    def __eq__(self, other):
        if not isinstance(other, AugmentedEdgeSet):
            return NotImplemented
        return self._edges == other._edges

    def __repr__(self):
        return f"AugmentedEdgeSet({len(self._edges)} edges)"

    @property
    def pairs(self):
        return [edge.pair for edge in self._edges]

    def users(self):
        return {edge.user_index for edge in self._edges}

    def per_user_counts(self):
        counts = {}
        for edge in self._edges:
            counts[edge.user_index] = counts.get(edge.user_index, 0) + 1
        return counts


@dataclass(frozen=True)
class SkipRecord:
    """A target user for whom no edge was emitted, with the reason"""

    user_index: int
    reason: str


@dataclass
class AugmentationConfig:
    """
    Augmentation knobs.

    Defaults: Q_alpha=0.25, K=10 candidates, N=8 votes, p=1 edge per user.
    """

    quantile: float = 0.25
    n_candidates: int = 10
    n_votes: int = 8
    edges_per_user: int = 1
    backend: Optional[object] = None
    parallelism: int = 1
    seed: int = field(default_factory=lambda: settings.VGCL_DEFAULT_SEED)
    prompt_mode: str = "few_shot"
    include_reasoning: bool = True
    similar_user_pool: int = 10
    fewshot_items: int = 3

    def __post_init__(self):
        if not 0.0 < self.quantile <= 1.0:
            raise AugmentationConfigError(f"quantile must be in (0, 1], got {self.quantile}")
        if self.n_candidates < 2:
            raise AugmentationConfigError("n_candidates must be at least 2")
        if self.n_candidates > 26:
            raise AugmentationConfigError("n_candidates cannot exceed 26 (letter alphabet)")
        if self.n_votes < 1:
            raise AugmentationConfigError("n_votes must be at least 1")
        if not 1 <= self.edges_per_user <= self.n_candidates:
            raise AugmentationConfigError(
                f"edges_per_user must be in [1, {self.n_candidates}], "
                f"got {self.edges_per_user}"
            )
        if self.parallelism < 1:
            raise AugmentationConfigError("parallelism must be at least 1")
        if self.prompt_mode not in ("zero_shot", "few_shot"):
            raise AugmentationConfigError(f"Unknown prompt mode: {self.prompt_mode}")
        if self.similar_user_pool < 1 or self.fewshot_items < 1:
            raise AugmentationConfigError("similar_user_pool and fewshot_items must be >= 1")

    @property
    def vote_quorum(self) -> int:
        """Successful permutations required before a user's edges are emitted."""
        return math.ceil(self.n_votes / 2)


@dataclass
class AugmentationResult:
    edges: AugmentedEdgeSet
    skipped: List[SkipRecord] = field(default_factory=list)
    targets: List[int] = field(default_factory=list)
