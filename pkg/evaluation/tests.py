import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from embeddings.models import EmbeddingMatrix
from graphs.services import build_graph, graph_from_pairs
from interactions.factories import make_log
from interactions.splits import leave_one_out_split

from .metrics import aplt_at_k, long_tail_set, ndcg_at_k, recall_at_k, truth_sets
from .models import CutoffMetrics, EvalReport, EvaluationError, LongTailSet
from .services import evaluate, recommend


def brute_force_metrics(recs, truth, gamma, K):
    """Reference Recall / NDCG / APLT written out per user."""
    recall, ndcg, aplt = [], [], []
    for u, relevant in truth.items():
        top = list(recs.get(u, []))[:K]
        hit_positions = [p for p, item in enumerate(top) if item in relevant]
        recall.append(len(hit_positions) / len(relevant))
        ideal = sum(1 / math.log2(p + 2) for p in range(min(len(relevant), K)))
        ndcg.append(sum(1 / math.log2(p + 2) for p in hit_positions) / ideal)
        aplt.append(sum(item in gamma for item in top) / len(top) if top else 0.0)
    n = len(truth)
    return (
        sum(recall) / n if n else 0.0,
        sum(ndcg) / n if n else 0.0,
        sum(aplt) / n if n else 0.0,
    )


class RecallTests(SimpleTestCase):
    def test_hit(self):
        self.assertEqual(recall_at_k({0: [3, 1, 2]}, {0: {1}}, 3), 1.0)

    def test_miss(self):
        self.assertEqual(recall_at_k({0: [3, 1, 2]}, {0: {7}}, 3), 0.0)

    def test_mean_over_users(self):
        self.assertEqual(recall_at_k({0: [1], 1: [2]}, {0: {1}, 1: {5}}, 1), 0.5)

    def test_hit_beyond_cutoff(self):
        self.assertEqual(recall_at_k({0: [3, 1, 2]}, {0: {2}}, 2), 0.0)

    def test_user_without_list_is_a_miss(self):
        self.assertEqual(recall_at_k({}, {0: {1}}, 5), 0.0)

    def test_invalid_cutoff(self):
        with self.assertRaises(EvaluationError):
            recall_at_k({0: [1]}, {0: {1}}, 0)


class NdcgTests(SimpleTestCase):
    def test_first_position(self):
        self.assertEqual(ndcg_at_k({0: [4, 5, 6]}, {0: {4}}, 3), 1.0)

    def test_third_position(self):
        self.assertAlmostEqual(ndcg_at_k({0: [4, 5, 6]}, {0: {6}}, 3), 0.5)

    def test_absent(self):
        self.assertEqual(ndcg_at_k({0: [4, 5, 6]}, {0: {9}}, 3), 0.0)


class LongTailSetTests(SimpleTestCase):
    def test_strictly_decreasing_popularity(self):
        # item i has 10 - i interactions
        pairs = [(u, i) for i in range(10) for u in range(10 - i)]
        gamma = long_tail_set(graph_from_pairs(10, 10, pairs))
        self.assertEqual(set(gamma.items), set(range(2, 10)))

    def test_equal_popularity_uses_index(self):
        pairs = [(0, i) for i in range(10)]
        gamma = long_tail_set(graph_from_pairs(1, 10, pairs))
        self.assertEqual(set(gamma.items), set(range(2, 10)))

    def test_single_item_is_all_head(self):
        gamma = long_tail_set(graph_from_pairs(2, 1, [(0, 0), (1, 0)]))
        self.assertEqual(len(gamma), 0)
        self.assertEqual(aplt_at_k({0: [0]}, gamma, 1), 0.0)

    def test_popularity_ranks_beat_index(self):
        # item 4 is the most popular; items 0..3 have one edge each
        pairs = [(0, 0), (0, 1), (0, 2), (0, 3)] + [(u, 4) for u in range(3)]
        gamma = long_tail_set(graph_from_pairs(3, 5, pairs))
        self.assertEqual(set(gamma.items), {0, 1, 2, 3})

    def test_invalid_head_fraction(self):
        with self.assertRaises(EvaluationError):
            long_tail_set(graph_from_pairs(1, 1, [(0, 0)]), head_fraction=0.0)


class ApltTests(SimpleTestCase):
    def test_all_long_tail(self):
        gamma = LongTailSet(items=frozenset(range(10)))
        self.assertEqual(aplt_at_k({0: list(range(10))}, gamma, 10), 1.0)

    def test_none_long_tail(self):
        gamma = LongTailSet(items=frozenset({99}))
        self.assertEqual(aplt_at_k({0: list(range(10))}, gamma, 10), 0.0)

    def test_four_of_ten(self):
        gamma = LongTailSet(items=frozenset({0, 3, 5, 9}))
        self.assertAlmostEqual(aplt_at_k({0: list(range(10))}, gamma, 10), 0.4)

    def test_empty_list_contributes_zero(self):
        gamma = LongTailSet(items=frozenset({1}))
        self.assertEqual(aplt_at_k({0: [1], 1: []}, gamma, 5), 0.5)
        self.assertEqual(aplt_at_k({0: [1]}, gamma, 5, users=[0, 1]), 0.5)


class OracleEquivalenceTests(SimpleTestCase):
    def test_matches_brute_force_on_random_fixtures(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            n_users = int(rng.integers(1, 6))
            n_items = int(rng.integers(2, 13))
            pairs = [
                (u, i) for u in range(n_users) for i in range(n_items) if rng.random() < 0.4
            ]
            graph = graph_from_pairs(n_users, n_items, pairs)
            gamma = long_tail_set(graph)
            truth = truth_sets({u: int(rng.integers(n_items)) for u in range(n_users)})
            recs = {
                u: rng.permutation(n_items)[: int(rng.integers(0, n_items + 1))].tolist()
                for u in range(n_users)
            }
            for K in (1, 3, 5, 10):
                expected = brute_force_metrics(recs, truth, gamma, K)
                got = (
                    recall_at_k(recs, truth, K),
                    ndcg_at_k(recs, truth, K),
                    aplt_at_k(recs, gamma, K, users=truth),
                )
                for value in got:
                    self.assertGreaterEqual(value, 0.0)
                    self.assertLessEqual(value, 1.0)
                np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        rows = []
        for u in range(4):
            for t, i in enumerate((u, u + 1, u + 2, u + 3)):
                rows.append((f"u{u}", f"i{i}", 4.0, t))
        self.split = leave_one_out_split(make_log(rows))
        self.graph = build_graph(self.split.train)

    def optimal_embeddings(self):
        """One dimension per item; each user points at their test item."""
        ids = self.split.ids
        n_users, n_items = self.graph.n_users, self.graph.n_items
        values = np.zeros((n_users + n_items, n_items))
        values[n_users:] = np.eye(n_items)
        for user_id, item_id in self.split.test.items():
            values[ids.user_index(user_id), ids.item_index(item_id)] = 1.0
        return EmbeddingMatrix(values=values, n_users=n_users)

    def test_constructed_optimum(self):
        report = evaluate(self.optimal_embeddings(), self.split, self.graph, Ks=(1, 2))
        for K in (1, 2):
            self.assertEqual(report[K].recall, 1.0)
            self.assertEqual(report[K].ndcg, 1.0)
        self.assertEqual(report.n_eval_users, 4)

    def test_recommendations_exclude_train_items(self):
        E = EmbeddingMatrix(
            values=np.random.default_rng(0).normal(size=(self.graph.n_nodes, 3)),
            n_users=self.graph.n_users,
        )
        recs = recommend(E, self.graph, range(self.graph.n_users), 3)
        for u, items in recs.lists.items():
            self.assertLessEqual(len(items), 3)
            for item in items:
                self.assertFalse(self.graph.has_edge(u, item))

    def test_cutoff_monotonicity(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            E = EmbeddingMatrix(
                values=rng.normal(size=(self.graph.n_nodes, 4)), n_users=self.graph.n_users
            )
            report = evaluate(E, self.split, self.graph, Ks=(1, 2, 3))
            recalls = [report[K].recall for K in (1, 2, 3)]
            self.assertEqual(recalls, sorted(recalls))

    def test_matches_brute_force_ranking(self):
        rng = np.random.default_rng(12)
        E = EmbeddingMatrix(
            values=rng.normal(size=(self.graph.n_nodes, 3)), n_users=self.graph.n_users
        )
        ids = self.split.ids
        K = 2
        truth, recs = {}, {}
        for user_id, item_id in self.split.test.items():
            u = ids.user_index(user_id)
            truth[u] = {ids.item_index(item_id)}
            scores = {
                i: float(E.items[i] @ E.user_row(u))
                for i in range(self.graph.n_items)
                if not self.graph.has_edge(u, i)
            }
            recs[u] = sorted(scores, key=lambda i: (-scores[i], i))
        gamma = long_tail_set(self.graph)
        expected = brute_force_metrics(recs, truth, gamma, K)
        report = evaluate(E, self.split, self.graph, Ks=(K,))
        np.testing.assert_allclose(
            (report[K].recall, report[K].ndcg, report[K].aplt), expected, atol=1e-12
        )

    def test_validation_target(self):
        report = evaluate(self.optimal_embeddings(), self.split, self.graph, Ks=(1,), target="validation")
        self.assertEqual(report.target, "validation")
        self.assertLess(report[1].recall, 1.0)

    def test_rejects_bad_arguments(self):
        E = self.optimal_embeddings()
        with self.assertRaises(EvaluationError):
            evaluate(E, self.split, self.graph, target="train")
        with self.assertRaises(EvaluationError):
            evaluate(E, self.split, self.graph, Ks=(0, 10))
        with self.assertRaises(EvaluationError):
            evaluate(EmbeddingMatrix(values=np.zeros((3, 2)), n_users=1), self.split, self.graph)


class EvalReportTests(SimpleTestCase):
    def test_json_layout(self):
        report = EvalReport(
            cutoffs={20: CutoffMetrics(0.2, 0.1, 0.5), 10: CutoffMetrics(0.1, 0.05, 0.4)},
            n_eval_users=7,
        )
        data = report.to_dict()
        self.assertEqual(list(data), ["10", "20", "n_eval_users"])
        self.assertEqual(data["10"], {"recall": 0.1, "ndcg": 0.05, "aplt": 0.4})
        with tempfile.TemporaryDirectory() as tmp:
            path = report.write(Path(tmp) / "nested" / "eval_report.json")
            self.assertEqual(json.loads(path.read_text()), data)
