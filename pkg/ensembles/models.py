"""
Rank-ensemble models: permutations, aggregated RRF scores, bound parameters
and the Mallows permutation distribution.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np


class EnsembleError(Exception):
    """Base class for rank-ensemble failures"""

    pass


class InvalidPermutationError(EnsembleError):
    """Raised when ranks are not a bijection onto {0, ..., K-1}"""

    pass


class TheoremInapplicableError(EnsembleError):
    """Raised when the concentration bound hypothesis (μ > 0) fails"""

    pass


@dataclass(frozen=True)
class Permutation:
    """
    ranks[slot] = 0-indexed rank of candidate `slot`.

    Validated on construction, so every ingestion path checks bijectivity.
    """

    ranks: Tuple[int, ...]

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if sorted(ranks) != list(range(len(ranks))):
            raise InvalidPermutationError(f"Not a permutation of 0..{len(ranks) - 1}: {ranks}")
        object.__setattr__(self, "ranks", ranks)

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "Permutation":
        """Build from slots listed best first."""
        order = [int(s) for s in order]
        if sorted(order) != list(range(len(order))):
            raise InvalidPermutationError(f"Not an ordering of 0..{len(order) - 1}: {order}")
        ranks = [0] * len(order)
        for rank, slot in enumerate(order):
            ranks[slot] = rank
        return cls(tuple(ranks))

    @classmethod
    def identity(cls, K: int) -> "Permutation":
        return cls(tuple(range(K)))

    @property
    def K(self) -> int:
        return len(self.ranks)

    @property
    def order(self) -> Tuple[int, ...]:
        """Slots sorted by rank (best first)."""
        order = [0] * len(self.ranks)
        for slot, rank in enumerate(self.ranks):
            order[rank] = slot
        return tuple(order)

    def rank_of(self, slot: int) -> int:
        return self.ranks[slot]

    def __len__(self):
        return len(self.ranks)


@dataclass(frozen=True, eq=False)
class RrfScores:
    """S(i) per candidate slot, aggregated over `votes` permutations"""

    scores: np.ndarray
    votes: int

    @property
    def K(self) -> int:
        return len(self.scores)

    def __getitem__(self, slot):
        return float(self.scores[slot])

    def tolist(self):
        return self.scores.tolist()


@dataclass(frozen=True)
class BoundParams:
    """N votes, mean gap μ, and the range [A, B] of the scoring function g"""

    N: int
    mu: float
    A: float
    B: float

    def __post_init__(self):
        if self.N < 1:
            raise EnsembleError(f"N must be >= 1, got {self.N}")
        if not self.B > self.A:
            raise EnsembleError(f"B must exceed A (A={self.A}, B={self.B})")

    @classmethod
    def for_reciprocal_rank(cls, N: int, mu: float, K: int, indexing: str = "zero") -> "BoundParams":
        """
        g(x) = 1/(x+1) over K ranks.

        indexing="zero": ranks 0..K-1, A = 1/K, B = 1.
        indexing="one":  the 1/(K+1) lower constant with B = 1.
        """
        if K < 1:
            raise EnsembleError(f"K must be >= 1, got {K}")
        if indexing == "zero":
            return cls(N=N, mu=mu, A=1.0 / K, B=1.0)
        if indexing == "one":
            return cls(N=N, mu=mu, A=1.0 / (K + 1), B=1.0)
        raise EnsembleError(f"Unknown rank indexing: {indexing!r}")


@dataclass(frozen=True)
class MallowsModel:
    """
    P(σ) ∝ exp(-θ · KendallTau(σ, σ0)) around `center`.
    """

    center: Permutation
    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta) or self.theta < 0:
            raise EnsembleError(f"Dispersion must be finite and >= 0, got {self.theta}")

    @property
    def K(self) -> int:
        return self.center.K
