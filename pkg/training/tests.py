import json
import math
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase, override_settings
from pytest import approx
from scipy.special import logsumexp

from augmentation.models import AugmentedEdge, AugmentedEdgeSet
from embeddings.models import EmbeddingMatrix
from embeddings.services import init_embeddings, last_layer, propagate, score
from graphs.services import graph_from_pairs, merge_augmented, normalized_adjacency

from .gradcheck import finite_difference_check
from .losses import bpr_loss, info_nce_loss, normalize_rows, total_loss
from .models import (
    DegenerateEmbeddingError,
    SamplingError,
    TrainConfig,
    TrainingConfigError,
    TrainingError,
    TripleBatch,
)
from .sampling import sample_batch
from .serializers import TrainConfigSerializer
from .services import ADAM_BETAS, ADAM_EPS, Trainer, train_vanilla, train_votegcl


def random_graph(rng, n_users=6, n_items=9, density=0.35):
    pairs = [
        (u, i) for u in range(n_users) for i in range(n_items) if rng.random() < density
    ]
    # Every user keeps at least one edge
    pairs += [(u, int(rng.integers(n_items))) for u in range(n_users)]
    return graph_from_pairs(n_users, n_items, pairs)


def small_config(**overrides):
    values = dict(dim=8, epochs=3, n_layers=2, batch_size=16, learning_rate=0.01, seed=7)
    values.update(overrides)
    return TrainConfig(**values)


class TrainConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = TrainConfig()
        self.assertEqual((cfg.dim, cfg.learning_rate, cfg.epochs, cfg.n_layers), (256, 1e-3, 100, 2))
        self.assertEqual(cfg.temperature, 0.2)

    def test_cl_weight_must_be_open_unit_interval(self):
        for value in (0.0, 1.0, 1.5):
            with self.assertRaises(TrainingConfigError):
                TrainConfig(cl_weight=value)

    def test_temperature_must_be_positive(self):
        with self.assertRaises(TrainingConfigError):
            TrainConfig(temperature=0.0)

    def test_serializer_rejects_non_positive_learning_rate(self):
        serializer = TrainConfigSerializer(data={"learning_rate": 0})
        self.assertFalse(serializer.is_valid())
        self.assertEqual(
            str(serializer.errors["learning_rate"][0]), "Ensure this value is greater than 0."
        )

    def test_serializer_overrides_win(self):
        serializer = TrainConfigSerializer(data={"epochs": 5, "dim": 16})
        self.assertTrue(serializer.is_valid())
        cfg = serializer.to_config(epochs=2, seed=None)
        self.assertEqual((cfg.epochs, cfg.dim, cfg.seed), (2, 16, 2024))

    @override_settings(VGCL_DEFAULT_SEED=99)
    def test_seed_defaults_to_setting(self):
        self.assertEqual(TrainConfig().seed, 99)
        self.assertEqual(TrainConfig(seed=3).seed, 3)


class SampleBatchTests(SimpleTestCase):
    def test_triples_respect_train_edges(self):
        rng = np.random.default_rng(0)
        graph = random_graph(rng)
        batch = sample_batch(graph, 200, np.random.default_rng(1))
        self.assertEqual(len(batch), 200)
        for u, i, j in batch.triples:
            self.assertTrue(graph.has_edge(u, i))
            self.assertFalse(graph.has_edge(u, j))

    def test_node_set_covers_batch(self):
        graph = random_graph(np.random.default_rng(2))
        batch = sample_batch(graph, 30, np.random.default_rng(3))
        nodes = set(batch.node_set.tolist())
        for u, i, j in batch.triples:
            self.assertIn(u, nodes)
            self.assertIn(graph.n_users + i, nodes)
            self.assertIn(graph.n_users + j, nodes)

    def test_deterministic_given_generator(self):
        graph = random_graph(np.random.default_rng(2))
        a = sample_batch(graph, 50, np.random.default_rng(9))
        b = sample_batch(graph, 50, np.random.default_rng(9))
        self.assertEqual(a.triples, b.triples)

    def test_saturated_users_are_skipped(self):
        graph = graph_from_pairs(2, 2, [(0, 0), (0, 1), (1, 0)])
        batch = sample_batch(graph, 20, np.random.default_rng(0))
        self.assertEqual(set(batch.users.tolist()), {1})
        self.assertEqual(set(batch.neg_items.tolist()), {1})

    def test_no_negatives_anywhere(self):
        graph = graph_from_pairs(1, 2, [(0, 0), (0, 1)])
        with self.assertRaises(SamplingError):
            sample_batch(graph, 4, np.random.default_rng(0))


class BprLossTests(SimpleTestCase):
    def test_single_triple_by_hand(self):
        # user (1, 0), positive (1, 0), negative (0, 0): margin 1
        values = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
        batch = TripleBatch(np.array([0]), np.array([0]), np.array([1]), n_users=1)
        loss, grad = bpr_loss(EmbeddingMatrix(values=values, n_users=1), batch)
        self.assertAlmostEqual(loss, math.log1p(math.exp(-1.0)))
        sigma = 1.0 / (1.0 + math.e)
        np.testing.assert_allclose(grad[0], [-sigma, 0.0])
        np.testing.assert_allclose(grad[1], [-sigma, 0.0])
        np.testing.assert_allclose(grad[2], [sigma, 0.0])

    def test_equal_scores_cost_log_two_per_triple(self):
        values = np.array([[0.4, -0.3], [0.2, 0.5], [0.2, 0.5]])
        batch = TripleBatch(np.zeros(3, int), np.zeros(3, int), np.ones(3, int), n_users=1)
        loss, _ = bpr_loss(values, batch)
        self.assertAlmostEqual(loss, 3 * math.log(2.0), places=12)

    def test_large_margin_saturates(self):
        # margin +40
        values = np.array([[1.0, 0.0], [40.0, 0.0], [0.0, 0.0]])
        batch = TripleBatch(np.array([0]), np.array([0]), np.array([1]), n_users=1)
        loss, grad = bpr_loss(values, batch)
        self.assertTrue(math.isfinite(loss))
        self.assertLess(loss, 1e-12)
        self.assertTrue(np.isfinite(grad).all())
        self.assertLess(np.abs(grad).max(), 1e-12)

    def test_no_user_gradient_when_items_coincide(self):
        values = np.array([[0.3, -0.2], [0.5, 0.1], [0.5, 0.1]])
        batch = TripleBatch(np.array([0]), np.array([0]), np.array([1]), n_users=1)
        _, grad = bpr_loss(values, batch)
        np.testing.assert_array_equal(grad[0], [0.0, 0.0])
        np.testing.assert_allclose(grad[1], -grad[2])
        np.testing.assert_allclose(grad[1], -0.5 * values[0])

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        graph = random_graph(rng)
        for _ in range(10):
            batch = sample_batch(graph, 12, rng)
            E = rng.normal(scale=0.5, size=(graph.n_nodes, 6))
            error = finite_difference_check(lambda p: bpr_loss(p, batch), E, eps=1e-5, rng=rng)
            self.assertLess(error, 1e-4)


class InfoNceLossTests(SimpleTestCase):
    def test_orthogonal_identical_views(self):
        values = np.eye(2)
        loss, _, _ = info_nce_loss(values, values, [0, 1], tau=1.0)
        self.assertAlmostEqual(loss, 2 * (math.log(math.e + 1.0) - 1.0))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            aug = rng.normal(size=(10, 5))
            org = rng.normal(size=(10, 5))
            nodes = np.sort(rng.choice(10, size=6, replace=False))
            tau = float(rng.uniform(0.2, 1.0))

            def aug_side(p):
                loss, grad_aug, _ = info_nce_loss(p, org, nodes, tau)
                return loss, grad_aug

            def org_side(p):
                loss, _, grad_org = info_nce_loss(aug, p, nodes, tau)
                return loss, grad_org

            self.assertLess(finite_difference_check(aug_side, aug, rng=rng), 1e-4)
            self.assertLess(finite_difference_check(org_side, org, rng=rng), 1e-4)

    def test_excluded_positive_variant(self):
        rng = np.random.default_rng(6)
        aug, org = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))

        def aug_side(p):
            loss, grad_aug, _ = info_nce_loss(p, org, [0, 1, 2, 3], 0.5, exclude_positive=True)
            return loss, grad_aug

        self.assertLess(finite_difference_check(aug_side, aug, rng=rng), 1e-4)

    def test_excluding_positive_drops_only_the_diagonal_from_the_denominator(self):
        rng = np.random.default_rng(11)
        aug, org = rng.normal(size=(7, 4)), rng.normal(size=(7, 4))
        nodes = [0, 2, 3, 6]
        tau = 0.3
        full, _, _ = info_nce_loss(aug, org, nodes, tau)
        excluded, _, _ = info_nce_loss(aug, org, nodes, tau, exclude_positive=True)

        z = aug[nodes] / np.linalg.norm(aug[nodes], axis=1, keepdims=True)
        w = org[nodes] / np.linalg.norm(org[nodes], axis=1, keepdims=True)
        s = z @ w.T / tau
        off_diagonal = np.where(np.eye(len(nodes), dtype=bool), -np.inf, s)
        expected = np.sum(logsumexp(s, axis=1) - logsumexp(off_diagonal, axis=1))
        self.assertAlmostEqual(full - excluded, expected, places=10)

    def test_excluded_positive_needs_two_nodes(self):
        with self.assertRaises(TrainingError):
            info_nce_loss(np.eye(2), np.eye(2), [0], tau=0.2, exclude_positive=True)

    def test_normalized_rows_have_unit_norm(self):
        rows = torch.from_numpy(np.random.default_rng(12).normal(scale=5.0, size=(20, 6)))
        norms = torch.linalg.vector_norm(normalize_rows(rows), dim=1).numpy()
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_zero_norm_row(self):
        values = np.array([[0.0, 0.0], [1.0, 0.0]])
        with self.assertRaisesRegex(DegenerateEmbeddingError, "degenerate embedding"):
            info_nce_loss(values, values, [0, 1], tau=0.2)

    def test_temperature_must_be_positive(self):
        with self.assertRaises(TrainingConfigError):
            info_nce_loss(np.eye(2), np.eye(2), [0, 1], tau=0.0)


class TotalLossTests(SimpleTestCase):
    def test_weighted_sum(self):
        self.assertEqual(total_loss(1.0, 2.0, 0.5), 2.0)
        self.assertEqual(total_loss(0.3, 0.1, 0.05), approx(0.305))

    def test_weight_outside_open_interval(self):
        with self.assertRaises(TrainingConfigError):
            total_loss(1.0, 1.0, 1.0)


class OptimizerTests(SimpleTestCase):
    def setUp(self):
        graph = random_graph(np.random.default_rng(0))
        self.trainer = Trainer(graph, small_config(learning_rate=0.01))

    def test_adam_hyperparameters(self):
        params = torch.nn.Parameter(torch.zeros((3, 2), dtype=torch.float64))
        optimizer = self.trainer.build_optimizer(params)
        self.assertIsInstance(optimizer, torch.optim.Adam)
        group = optimizer.param_groups[0]
        self.assertEqual(group["lr"], 0.01)
        self.assertEqual(tuple(group["betas"]), ADAM_BETAS)
        self.assertEqual(group["eps"], ADAM_EPS)

    def test_first_step_size_is_learning_rate(self):
        params = torch.nn.Parameter(torch.ones((1, 1), dtype=torch.float64))
        optimizer = self.trainer.build_optimizer(params)
        params.grad = torch.full((1, 1), 5.0, dtype=torch.float64)
        optimizer.step()
        self.assertAlmostEqual(float(params[0, 0]), 0.99, places=6)


class GradientCheckTests(SimpleTestCase):
    def test_rejects_out_of_range_epsilon(self):
        with self.assertRaises(TrainingError):
            finite_difference_check(lambda p: (0.0, np.zeros_like(p)), np.zeros((2, 2)), eps=1e-2)

    def test_detects_wrong_gradient(self):
        def wrong(p):
            return float(np.sum(p**2)), p.copy()  # should be 2p

        E = np.random.default_rng(0).normal(size=(3, 3))
        self.assertGreater(finite_difference_check(wrong, E), 0.1)

    def test_votegcl_step_through_propagation(self):
        rng = np.random.default_rng(8)
        graph = random_graph(rng, n_users=4, n_items=6)
        candidates = [(u, i) for u in range(4) for i in range(6) if not graph.has_edge(u, i)]
        extra = AugmentedEdgeSet([AugmentedEdge(*candidates[0]), AugmentedEdge(*candidates[-1])])
        trainer = Trainer(graph, small_config(dim=4), aug_graph=merge_augmented(graph, extra))
        batch = sample_batch(trainer.sample_graph, 8, rng)
        E = rng.normal(scale=0.5, size=(graph.n_nodes, 4))

        def step(p):
            _, _, total, grad = trainer._step(p, batch)
            return total, grad

        self.assertLess(finite_difference_check(step, E, rng=rng), 1e-4)

    def test_vanilla_step_through_propagation(self):
        rng = np.random.default_rng(9)
        graph = random_graph(rng, n_users=4, n_items=6)
        trainer = Trainer(graph, small_config(dim=4))
        batch = sample_batch(graph, 8, rng)
        E = rng.normal(scale=0.5, size=(graph.n_nodes, 4))

        def step(p):
            _, _, total, grad = trainer._step(p, batch)
            return total, grad

        self.assertLess(finite_difference_check(step, E, rng=rng), 1e-4)


class TrainerTests(SimpleTestCase):
    def setUp(self):
        self.graph = random_graph(np.random.default_rng(10), n_users=8, n_items=12)

    def test_vanilla_is_deterministic(self):
        a = train_vanilla(self.graph, small_config())
        b = train_vanilla(self.graph, small_config())
        np.testing.assert_array_equal(a.values, b.values)
        self.assertEqual(a.shape, (self.graph.n_nodes, 8))

    def test_zero_epochs_returns_pooled_initialization(self):
        cfg = small_config(epochs=0)
        E = train_vanilla(self.graph, cfg)
        E0 = init_embeddings(self.graph.n_nodes, cfg.dim, cfg.seed, n_users=self.graph.n_users)
        stack = propagate(E0, normalized_adjacency(self.graph), cfg.n_layers)
        expected = sum(layer.values for layer in stack.layers) / len(stack)
        np.testing.assert_allclose(E.values, expected)

    def test_loss_decreases(self):
        trainer = Trainer(self.graph, small_config(epochs=40, learning_rate=0.05))
        trainer.fit()
        totals = trainer.history.totals()
        self.assertLess(np.mean(totals[-5:]), np.mean(totals[:5]))

    def test_metrics_log(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "metrics.jsonl"
            train_vanilla(self.graph, small_config(epochs=2), metrics_path=path)
            lines = [json.loads(line) for line in path.read_text().splitlines()]
        self.assertEqual([line["epoch"] for line in lines], [1, 2])
        self.assertEqual(set(lines[0]), {"epoch", "bpr_loss", "cl_loss", "total"})
        self.assertEqual(lines[0]["cl_loss"], 0.0)

    def test_votegcl_uses_last_layer_of_augmented_stack(self):
        u, i = next(
            (u, i)
            for u in range(self.graph.n_users)
            for i in range(self.graph.n_items)
            if not self.graph.has_edge(u, i)
        )
        aug = merge_augmented(self.graph, AugmentedEdgeSet([AugmentedEdge(u, i, 1.0, 8)]))
        cfg = small_config(epochs=0)
        E = train_votegcl(self.graph, aug, cfg)
        E0 = init_embeddings(self.graph.n_nodes, cfg.dim, cfg.seed, n_users=self.graph.n_users)
        expected = last_layer(propagate(E0, aug.adjacency, cfg.n_layers))
        np.testing.assert_allclose(E.values, expected.values)

    def test_votegcl_records_contrastive_loss(self):
        u, i = next(
            (u, i)
            for u in range(self.graph.n_users)
            for i in range(self.graph.n_items)
            if not self.graph.has_edge(u, i)
        )
        aug = merge_augmented(self.graph, AugmentedEdgeSet([AugmentedEdge(u, i)]))
        trainer = Trainer(self.graph, small_config(epochs=2), aug_graph=aug)
        trainer.fit()
        self.assertTrue(all(m.cl_loss > 0 for m in trainer.history.epochs))
        self.assertEqual(trainer.pooling, "last")

    def test_augmented_graph_must_contain_observed_edges(self):
        smaller = graph_from_pairs(
            self.graph.n_users, self.graph.n_items, list(self.graph.edges)[1:]
        )
        with self.assertRaises(TrainingError):
            train_votegcl(self.graph, smaller, small_config())

    def test_votegcl_tolerates_items_without_train_edges(self):
        # item 3 appears in no edge of either view but is still drawn as a negative
        graph = graph_from_pairs(3, 4, [(0, 0), (1, 1), (2, 0), (2, 2)])
        aug = merge_augmented(graph, AugmentedEdgeSet([AugmentedEdge(0, 1)]))
        trainer = Trainer(graph, small_config(epochs=3, batch_size=4), aug_graph=aug)
        self.assertFalse(trainer.contrastive_mask[graph.n_users + 3])
        E = trainer.fit()
        self.assertTrue(E.is_finite())

    def test_votegcl_without_augmentation_matches_vanilla(self):
        # same batches, vanishing contrastive weight, same pooling
        cfg = small_config(cl_weight=1e-9, pooling="mean")
        vanilla = train_vanilla(self.graph, cfg)
        votegcl = train_votegcl(self.graph, self.graph, cfg)
        np.testing.assert_allclose(votegcl.values, vanilla.values, atol=1e-5)

    def test_two_by_two_ranks_positives_first(self):
        graph = graph_from_pairs(2, 2, [(0, 0), (1, 1)])
        cfg = small_config(epochs=300, learning_rate=0.05, batch_size=2)
        E = train_vanilla(graph, cfg)
        self.assertGreater(score(E, 0, 0), score(E, 0, 1))
        self.assertGreater(score(E, 1, 1), score(E, 1, 0))

    def test_votegcl_loss_trajectory_is_reproducible(self):
        aug = merge_augmented(self.graph, AugmentedEdgeSet(self.one_new_edge_per_user()))
        first = Trainer(self.graph, small_config(epochs=5), aug_graph=aug)
        second = Trainer(self.graph, small_config(epochs=5), aug_graph=aug)
        np.testing.assert_array_equal(first.fit().values, second.fit().values)
        self.assertEqual(first.history.totals(), second.history.totals())

    def test_stronger_contrastive_weight_narrows_view_gap(self):
        aug = merge_augmented(self.graph, AugmentedEdgeSet(self.one_new_edge_per_user()))

        def mean_gap(cl_weight):
            gaps = []
            for seed in (1, 2, 3):
                cfg = small_config(epochs=60, learning_rate=0.05, cl_weight=cl_weight, seed=seed)
                trainer = Trainer(self.graph, cfg, aug_graph=aug)
                trainer.fit()
                gaps.append(trainer.view_gap(trainer.params))
            return np.mean(gaps)

        self.assertLess(mean_gap(0.2), mean_gap(0.01))

    def test_view_gap_needs_augmented_view(self):
        trainer = Trainer(self.graph, small_config())
        with self.assertRaises(TrainingError):
            trainer.view_gap(np.zeros((self.graph.n_nodes, 8)))

    def one_new_edge_per_user(self):
        return [
            AugmentedEdge(u, next(i for i in range(self.graph.n_items) if not self.graph.has_edge(u, i)))
            for u in range(self.graph.n_users)
        ]
