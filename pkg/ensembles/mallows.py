"""
Mallows sampling by repeated insertion.

Items are inserted in center order; the i-th item (0-based) lands k places
above the bottom with probability ∝ exp(-θ k), k in {0, ..., i}. Each of
those k places is one Kendall-tau inversion against the center, which makes
the sample exact.
"""

import itertools
import math
from typing import List

import numpy as np

from .models import MallowsModel, Permutation


def _displacements(theta: float, n_positions: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n truncated-geometric displacements k in [0, n_positions)."""
    weights = np.exp(-theta * np.arange(n_positions))
    cdf = np.cumsum(weights)
    draws = rng.random(n) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, draws, side="right"), n_positions - 1)


def mallows_sample_many(model: MallowsModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    n samples as an (n, K) array of ranks indexed by candidate slot.
    """
    K = model.K
    center_order = model.center.order
    # positions[:, s] is the current position of the s-th inserted item
    positions = np.zeros((n, K), dtype=np.int64)

    for step in range(1, K):
        k = _displacements(model.theta, step + 1, n, rng)
        insert_at = step - k
        shift = positions[:, :step] >= insert_at[:, None]
        positions[:, :step] += shift
        positions[:, step] = insert_at

    ranks = np.empty((n, K), dtype=np.int64)
    ranks[:, list(center_order)] = positions
    return ranks


def mallows_sample(model: MallowsModel, rng: np.random.Generator) -> Permutation:
    return Permutation(tuple(mallows_sample_many(model, 1, rng)[0].tolist()))


def kendall_tau(sigma: Permutation, other: Permutation) -> int:
    """Number of slot pairs ordered differently by the two permutations."""
    if sigma.K != other.K:
        raise ValueError("Permutations must have the same length")
    a = np.asarray(sigma.ranks)
    b = np.asarray(other.ranks)
    da = np.sign(a[:, None] - a[None, :])
    db = np.sign(b[:, None] - b[None, :])
    return int(np.sum(da * db < 0) // 2)


def mallows_normalizer(theta: float, K: int) -> float:
    """Z = Π_{i=1..K} Σ_{k<i} exp(-θ k)."""
    return math.prod(sum(math.exp(-theta * k) for k in range(i)) for i in range(1, K + 1))


def mallows_probability(model: MallowsModel, perm: Permutation) -> float:
    return math.exp(-model.theta * kendall_tau(perm, model.center)) / mallows_normalizer(
        model.theta, model.K
    )


def all_permutations(K: int) -> List[Permutation]:
    return [Permutation(p) for p in itertools.permutations(range(K))]
