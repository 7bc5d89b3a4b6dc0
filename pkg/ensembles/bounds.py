"""
Concentration bound for RRF aggregation and its Monte-Carlo verification.

The bound exp(-N μ² / (2 (B - A)²)) is Hoeffding's inequality applied to the
per-vote score difference D = g(rank(i_k)) - g(rank(i_j)) ∈ [A - B, B - A].
verify_bound evaluates it with the expected score gap E[D] by default; the
expected rank gap can be plugged in instead (gap="rank"), which is not a
valid Hoeffding argument for g(x) = 1/(x+1). Each row reports the gap the
bound used as mu_hat, names it in `gap`, and carries both raw estimates.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .algorithms import reciprocal_rank
from .mallows import mallows_sample_many
from .models import BoundParams, EnsembleError, MallowsModel, Permutation, TheoremInapplicableError

logger = logging.getLogger(__name__)

GAP_SCORE = "score"
GAP_RANK = "rank"

DEFAULT_VOTES = (1, 2, 4, 8, 16, 32)
DEFAULT_THETAS = (0.1, 0.3, 1.0)
# mu_hat is the gap the bound column was computed from; `gap` names which one
VERIFY_COLUMNS = (
    "N", "theta", "mu_hat", "empirical_rate", "bound", "stderr", "gap", "rank_gap", "score_gap",
)


def hoeffding_bound(params: BoundParams) -> float:
    """
    min(1, exp(-N μ² / (2 (B - A)²))).

    Raises:
        TheoremInapplicableError: μ <= 0
    """
    if not params.mu > 0:
        error_msg = f"theorem inapplicable: requires mu > 0, got {params.mu}"
        logger.error(error_msg)
        raise TheoremInapplicableError(error_msg)
    exponent = -params.N * params.mu**2 / (2.0 * (params.B - params.A) ** 2)
    return min(1.0, math.exp(exponent))


def _rng(rng, seed=0):
    return rng if rng is not None else np.random.default_rng(seed)


def estimate_rank_gap(
    model: MallowsModel,
    i_j: int,
    i_k: int,
    samples: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """μ̂ = mean of rank(i_j) - rank(i_k) over `samples` draws."""
    if samples < 1:
        raise EnsembleError(f"samples must be >= 1, got {samples}")
    if i_j == i_k:
        return 0.0
    ranks = mallows_sample_many(model, samples, _rng(rng))
    return float(np.mean(ranks[:, i_j] - ranks[:, i_k]))


def estimate_score_gap(
    model: MallowsModel,
    i_j: int,
    i_k: int,
    samples: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Mean of g(rank(i_k)) - g(rank(i_j)), the Hoeffding mean."""
    if samples < 1:
        raise EnsembleError(f"samples must be >= 1, got {samples}")
    if i_j == i_k:
        return 0.0
    ranks = mallows_sample_many(model, samples, _rng(rng))
    return float(np.mean(reciprocal_rank(ranks[:, i_k]) - reciprocal_rank(ranks[:, i_j])))


def empirical_misrank_rate(
    model: MallowsModel,
    i_j: int,
    i_k: int,
    N: int,
    trials: int,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Fraction of trials in which the N-vote RRF score of i_j (the worse item)
    strictly exceeds that of i_k.
    """
    if N < 1 or trials < 1:
        raise EnsembleError(f"N and trials must be >= 1, got N={N}, trials={trials}")

    ranks = mallows_sample_many(model, N * trials, _rng(rng)).reshape(trials, N, model.K)
    score_j = reciprocal_rank(ranks[:, :, i_j]).sum(axis=1)
    score_k = reciprocal_rank(ranks[:, :, i_k]).sum(axis=1)
    return float(np.mean(score_j > score_k))


def monte_carlo_stderr(rate: float, trials: int) -> float:
    return math.sqrt(max(rate * (1.0 - rate), 0.0) / trials)


@dataclass
class BoundRow:
    N: int
    theta: float
    mu_hat: float
    empirical_rate: float
    bound: float
    stderr: float
    gap: str
    rank_gap: float
    score_gap: float

    @property
    def within_bound(self) -> bool:
        """Empirical rate at most bound + 3 Monte-Carlo standard errors."""
        return self.empirical_rate <= self.bound + 3.0 * self.stderr

    def as_tuple(self):
        return (
            self.N,
            self.theta,
            self.mu_hat,
            self.empirical_rate,
            self.bound,
            self.stderr,
            self.gap,
            self.rank_gap,
            self.score_gap,
        )


def verify_bound(
    K: int = 10,
    votes: Sequence[int] = DEFAULT_VOTES,
    thetas: Sequence[float] = DEFAULT_THETAS,
    trials: int = 10000,
    seed: int = 0,
    mu_samples: int = 100000,
    gap: str = GAP_SCORE,
    indexing: str = "zero",
) -> List[BoundRow]:
    """
    Bound-vs-measurement grid for the adjacent pair at the top of the
    Mallows center (i_k = best slot, i_j = runner-up).

    Each theta gets its own generator stream; gaps are estimated once per
    theta and reused across N.
    """
    if K < 2:
        raise EnsembleError("verify_bound needs K >= 2")
    if gap not in (GAP_SCORE, GAP_RANK):
        raise EnsembleError(f"Unknown gap estimator: {gap!r}")

    center = Permutation.identity(K)
    i_k, i_j = center.order[0], center.order[1]
    rows = []

    for theta_index, theta in enumerate(thetas):
        model = MallowsModel(center=center, theta=float(theta))
        rng = np.random.default_rng([seed, theta_index])
        rank_gap = estimate_rank_gap(model, i_j, i_k, mu_samples, rng)
        score_gap = estimate_score_gap(model, i_j, i_k, mu_samples, rng)
        mu = score_gap if gap == GAP_SCORE else rank_gap

        for N in votes:
            rate = empirical_misrank_rate(model, i_j, i_k, int(N), trials, rng)
            bound = hoeffding_bound(
                BoundParams.for_reciprocal_rank(int(N), mu, K, indexing=indexing)
            )
            row = BoundRow(
                N=int(N),
                theta=float(theta),
                mu_hat=mu,
                empirical_rate=rate,
                bound=bound,
                stderr=monte_carlo_stderr(rate, trials),
                gap=gap,
                rank_gap=rank_gap,
                score_gap=score_gap,
            )
            if not row.within_bound:
                logger.warning(
                    f"Empirical rate {rate:.5f} exceeds bound {bound:.5f} + 3σ "
                    f"at N={N}, theta={theta}"
                )
            rows.append(row)

    return rows


@dataclass
class DecayTestResult:
    decreasing: int
    increasing: int
    ties: int
    p_value: float
    rates: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.decreasing > self.increasing


def decay_sign_test(rates: Sequence[float]) -> DecayTestResult:
    """
    Sign test on successive differences of log(rate) (N increasing).

    A zero rate counts as a decrease from a positive rate and as a tie with
    another zero.
    """
    rates = [float(r) for r in rates]
    decreasing = increasing = ties = 0
    for previous, current in zip(rates, rates[1:]):
        if previous == current:
            ties += 1
        elif current == 0.0 or (previous > 0.0 and math.log(current) < math.log(previous)):
            decreasing += 1
        else:
            increasing += 1

    informative = decreasing + increasing
    p_value = (
        binomtest(decreasing, informative, 0.5, alternative="greater").pvalue
        if informative
        else 1.0
    )
    return DecayTestResult(decreasing, increasing, ties, float(p_value), rates)
