"""
Evaluation Service Layer

evaluate() scores every eval user against every item, drops their train
items, and reports Recall / NDCG / APLT at each cutoff.
"""

import logging
from typing import Iterable, Optional

from embeddings.algorithms import top_k_candidates
from embeddings.models import EmbeddingMatrix
from graphs.models import InteractionGraph
from interactions.models import SplitDataset

from .metrics import (
    DEFAULT_HEAD_FRACTION,
    aplt_at_k,
    long_tail_set,
    ndcg_at_k,
    recall_at_k,
    truth_sets,
)
from .models import CutoffMetrics, EvalReport, EvaluationError, RecommendationList

logger = logging.getLogger(__name__)

EVAL_TARGETS = ("test", "validation")
DEFAULT_CUTOFFS = (10, 20)


def recommend(
    E: EmbeddingMatrix, graph: InteractionGraph, users: Iterable[int], K: int
) -> RecommendationList:
    """Top-K unseen items per user by descending score, ascending index on ties."""
    lists = {u: top_k_candidates(E, graph, u, K).items for u in users}
    return RecommendationList(lists=lists, K=K)


def evaluate(
    E_final: EmbeddingMatrix,
    split: SplitDataset,
    graph: InteractionGraph,
    Ks: Iterable[int] = DEFAULT_CUTOFFS,
    target: str = "test",
    head_fraction: float = DEFAULT_HEAD_FRACTION,
    recommendations: Optional[RecommendationList] = None,
) -> EvalReport:
    """
    Leave-one-out evaluation of E_final on the test (or validation) split.

    `graph` is the observed train graph: it defines the excluded items and
    the popularity behind the long-tail set.
    """
    if target not in EVAL_TARGETS:
        raise EvaluationError(f"target must be one of {EVAL_TARGETS}, got {target!r}")
    Ks = sorted(set(Ks))
    if not Ks or Ks[0] < 1:
        raise EvaluationError(f"cutoffs must be positive, got {Ks}")
    if E_final.n_users != graph.n_users or E_final.n_items != graph.n_items:
        raise EvaluationError(
            f"Embeddings ({E_final.n_users} users, {E_final.n_items} items) do not match "
            f"the graph ({graph.n_users} users, {graph.n_items} items)"
        )

    ids = split.ids
    held_out = split.test if target == "test" else split.validation
    truth = truth_sets(
        {
            ids.user_index(user_id): ids.item_index(item_id)
            for user_id, item_id in held_out.items()
            if user_id in split.eval_users
        }
    )
    users = sorted(truth)

    if recommendations is None:
        recommendations = recommend(E_final, graph, users, max(Ks))
    gamma = long_tail_set(graph, head_fraction=head_fraction)

    report = EvalReport(n_eval_users=len(users), target=target)
    for K in Ks:
        recs = recommendations.truncated(K)
        report.cutoffs[K] = CutoffMetrics(
            recall=recall_at_k(recs, truth, K),
            ndcg=ndcg_at_k(recs, truth, K),
            aplt=aplt_at_k(recs, gamma, K, users=users),
        )
        logger.info(
            f"{target} @{K}: recall={report.cutoffs[K].recall:.4f} "
            f"ndcg={report.cutoffs[K].ndcg:.4f} aplt={report.cutoffs[K].aplt:.4f}"
        )

    return report
