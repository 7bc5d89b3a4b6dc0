import math

import numpy as np
from django.test import SimpleTestCase

from augmentation.models import AugmentedEdge, AugmentedEdgeSet
from interactions.factories import make_log

from .models import DuplicateEdgeError, InvalidQuantileError
from .services import (
    build_graph,
    degree_threshold,
    graph_from_pairs,
    low_degree_users,
    merge_augmented,
    normalized_adjacency,
)


def random_graph(rng, n_users, n_items, density=0.3):
    pairs = [
        (u, i) for u in range(n_users) for i in range(n_items) if rng.random() < density
    ]
    return graph_from_pairs(n_users, n_items, pairs)


def dense_adjacency(graph):
    """Brute-force Ã from the edge list."""
    n = graph.n_nodes
    A = np.zeros((n, n))
    for u, i in graph.edges:
        value = 1.0 / math.sqrt(graph.degree_u[u] * graph.degree_i[i])
        A[u, graph.n_users + i] = value
        A[graph.n_users + i, u] = value
    return A


class BuildGraphTests(SimpleTestCase):
    def test_single_edge(self):
        graph = build_graph(make_log([("u1", "i1")]))
        self.assertEqual(graph.n_edges, 1)
        self.assertEqual(graph.degree_u.tolist(), [1])
        self.assertEqual(graph.degree_i.tolist(), [1])

    def test_shared_item(self):
        graph = build_graph(make_log([("u1", "i1"), ("u2", "i1")]))
        self.assertEqual(graph.degree_i.tolist(), [2])
        self.assertEqual(graph.degree_u.tolist(), [1, 1])

    def test_empty_log(self):
        graph = build_graph(make_log([]))
        self.assertEqual(graph.n_edges, 0)

    def test_degrees_match_incident_edges(self):
        graph = random_graph(np.random.default_rng(1), 6, 9)
        for u in range(graph.n_users):
            self.assertEqual(graph.degree_u[u], sum(1 for (v, _) in graph.edges if v == u))
        for i in range(graph.n_items):
            self.assertEqual(graph.degree_i[i], sum(1 for (_, j) in graph.edges if j == i))


class NormalizedAdjacencyTests(SimpleTestCase):
    def test_single_edge_entry_is_one(self):
        adj = normalized_adjacency(graph_from_pairs(1, 1, [(0, 0)]))
        self.assertEqual(adj.toarray()[0, 1], 1.0)
        self.assertEqual(adj.toarray()[1, 0], 1.0)

    def test_item_degree_two(self):
        adj = normalized_adjacency(graph_from_pairs(2, 1, [(0, 0), (1, 0)]))
        self.assertAlmostEqual(adj.toarray()[0, 2], 1 / math.sqrt(2), places=8)

    def test_isolated_user_row_is_zero(self):
        adj = normalized_adjacency(graph_from_pairs(2, 1, [(0, 0)]))
        self.assertTrue(np.all(adj.toarray()[1] == 0.0))

    def test_matches_dense_construction(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            graph = random_graph(rng, int(rng.integers(1, 8)), int(rng.integers(1, 12)))
            A = normalized_adjacency(graph).toarray()
            expected = dense_adjacency(graph)
            np.testing.assert_allclose(A, expected, rtol=0, atol=1e-12)
            np.testing.assert_array_equal(A, A.T)
            self.assertTrue(np.all(np.diag(A) == 0.0))
            self.assertTrue(np.all(np.isfinite(A)))


class LowDegreeUsersTests(SimpleTestCase):
    def graph_with_degrees(self, degrees):
        pairs = [(u, i) for u, d in enumerate(degrees) for i in range(d)]
        return graph_from_pairs(len(degrees), max(degrees), pairs)

    def test_nearest_rank_quarter(self):
        graph = self.graph_with_degrees([1, 1, 2, 5, 8, 9, 10, 12])
        self.assertEqual(degree_threshold(graph.degree_u, 0.25), 1)
        self.assertEqual(low_degree_users(graph, 0.25), {0, 1})

    def test_matches_sorted_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            degrees = rng.integers(1, 15, size=int(rng.integers(1, 12))).tolist()
            graph = self.graph_with_degrees(degrees)
            q = float(rng.uniform(0.01, 1.0))
            ordered = sorted(degrees)
            threshold = ordered[max(1, math.ceil(q * len(ordered))) - 1]
            expected = {u for u, d in enumerate(degrees) if d <= threshold}
            self.assertEqual(low_degree_users(graph, q), expected)

    def test_equal_degrees_select_everyone(self):
        graph = self.graph_with_degrees([3, 3, 3, 3])
        for q in (0.01, 0.25, 0.5, 1.0):
            self.assertEqual(low_degree_users(graph, q), {0, 1, 2, 3})

    def test_full_quantile(self):
        graph = self.graph_with_degrees([1, 4, 2, 9])
        self.assertEqual(low_degree_users(graph, 1.0), {0, 1, 2, 3})

    def test_monotone_in_quantile(self):
        graph = self.graph_with_degrees([2, 7, 1, 4, 4, 9, 3])
        previous = set()
        for q in (0.1, 0.3, 0.5, 0.7, 1.0):
            current = low_degree_users(graph, q)
            self.assertTrue(previous <= current)
            previous = current

    def test_invalid_quantile(self):
        graph = self.graph_with_degrees([1, 2])
        for q in (0.0, -0.1, 1.5):
            with self.assertRaises(InvalidQuantileError):
                low_degree_users(graph, q)


class MergeAugmentedTests(SimpleTestCase):
    def setUp(self):
        # u0 - i0, u1 - i0, i1 fresh
        self.graph = graph_from_pairs(2, 2, [(0, 0), (1, 0)])

    def test_empty_merge_is_identity(self):
        merged = merge_augmented(self.graph, AugmentedEdgeSet())
        np.testing.assert_array_equal(
            merged.adjacency.toarray(), normalized_adjacency(self.graph).toarray()
        )
        self.assertEqual(merged.n_edges, self.graph.n_edges)

    def test_new_edge_to_fresh_item(self):
        merged = merge_augmented(self.graph, AugmentedEdgeSet([AugmentedEdge(0, 1, 1.0, 8)]))
        self.assertEqual(merged.n_edges, 3)
        self.assertEqual(merged.graph.degree_i.tolist(), [2, 1])
        self.assertEqual(merged.graph.degree_u.tolist(), [2, 1])
        A = merged.adjacency.toarray()
        # u0 now has degree 2: 1/sqrt(2*1) to i1, 1/sqrt(2*2) to i0
        self.assertAlmostEqual(A[0, 3], 1 / math.sqrt(2))
        self.assertAlmostEqual(A[0, 2], 0.5)
        self.assertAlmostEqual(A[1, 2], 1 / math.sqrt(2))
        self.assertTrue(self.graph.edges <= merged.graph.edges)

    def test_duplicate_of_observed_edge(self):
        with self.assertRaisesRegex(DuplicateEdgeError, "edge already observed"):
            merge_augmented(self.graph, AugmentedEdgeSet([AugmentedEdge(1, 0)]))
