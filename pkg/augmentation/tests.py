import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, override_settings

from embeddings.algorithms import top_k_candidates
from embeddings.models import EmbeddingMatrix
from embeddings.services import init_embeddings
from ensembles.models import Permutation
from evaluation.metrics import ndcg_at_k
from graphs.services import build_graph, low_degree_users
from interactions.factories import make_catalog, make_log
from interactions.models import Catalog
from interactions.persistence import load_split, read_augmented_edges, save_embeddings, save_split
from interactions.splits import leave_one_out_split
from rerankers.models import (
    MODE_FEW_SHOT,
    MODE_ZERO_SHOT,
    RemoteLLMBackend,
    RerankTransportError,
    SimulatorBackend,
)

from .models import AugmentationConfig, AugmentationConfigError, AugmentationError
from .serializers import AugmentationConfigSerializer
from .services import (
    EDGES_FILE,
    SKIP_REPORT_FILE,
    UserHistories,
    UserSkippedError,
    augment_user,
    build_request,
    oracle_preferences,
    run_augmentation,
    run_augmentation_job,
)
from .tasks import run_augmentation_task


def fixture_log(n_users=8, n_items=12, seed=0):
    """Users with 1..6 interactions over a shared item pool."""
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        count = 1 + u % 6
        for i in rng.choice(n_items, size=count, replace=False):
            rows.append((f"u{u}", f"i{i}", float(rng.integers(1, 6))))
    return make_log(rows)


def simulator(theta=1.0, **kwargs):
    return SimulatorBackend(theta=theta, **kwargs)


class AugmentationFixture(SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.log = fixture_log()
        self.graph = build_graph(self.log)
        self.E = init_embeddings(self.graph.n_nodes, 6, seed=3, n_users=self.graph.n_users)
        self.histories = UserHistories(self.log)
        self.catalog = make_catalog(self.log.ids.item_ids)

    def config(self, **overrides):
        values = dict(n_candidates=4, n_votes=4, backend=simulator(), seed=11)
        values.update(overrides)
        return AugmentationConfig(**values)

    def augment(self, u, cfg, catalog="default"):
        catalog = self.catalog if catalog == "default" else catalog
        return augment_user(u, self.E, self.graph, catalog, cfg, self.histories)


class AugmentationConfigTests(SimpleTestCase):
    def test_defaults(self):
        cfg = AugmentationConfig()
        self.assertEqual(
            (cfg.quantile, cfg.n_candidates, cfg.n_votes, cfg.edges_per_user), (0.25, 10, 8, 1)
        )
        self.assertEqual(cfg.vote_quorum, 4)
        self.assertEqual(AugmentationConfig(n_votes=5).vote_quorum, 3)

    def test_invariants(self):
        for kwargs in (
            {"quantile": 0.0},
            {"quantile": 1.5},
            {"n_votes": 0},
            {"edges_per_user": 11},
            {"edges_per_user": 0},
            {"n_candidates": 27},
            {"parallelism": 0},
            {"prompt_mode": "one_shot"},
        ):
            with self.assertRaises(AugmentationConfigError, msg=kwargs):
                AugmentationConfig(**kwargs)

    @override_settings(VGCL_DEFAULT_SEED=99)
    def test_seed_defaults_to_setting(self):
        self.assertEqual(AugmentationConfig().seed, 99)


class AugmentUserTests(AugmentationFixture):
    def test_deterministic_ranker_picks_top_retrieved(self):
        cfg = self.config(backend=simulator(theta=80.0))
        for u in range(self.graph.n_users):
            top = top_k_candidates(self.E, self.graph, u, cfg.n_candidates).items[0]
            edges = self.augment(u, cfg)
            self.assertEqual([e.item_index for e in edges], [top])
            self.assertEqual(edges[0].votes, 4)
            self.assertAlmostEqual(edges[0].rrf_score, 4.0)

    def test_reversed_votes_tie_goes_to_retrieval_order(self):
        K = 4
        orders = {0: Permutation.identity(K), 1: Permutation(tuple(range(K - 1, -1, -1)))}
        cfg = self.config(n_votes=2, n_candidates=K)

        with mock.patch(
            "augmentation.services.rerank_once",
            side_effect=lambda backend, req, rng, vote_index: orders[vote_index],
        ):
            edges = self.augment(0, cfg)

        top = top_k_candidates(self.E, self.graph, 0, K).items[0]
        self.assertEqual([e.item_index for e in edges], [top])
        self.assertAlmostEqual(edges[0].rrf_score, 1.0 + 1.0 / K)

    def test_failing_backend_skips_user(self):
        cfg = self.config()
        with mock.patch(
            "augmentation.services.rerank_once", side_effect=RerankTransportError("connection refused")
        ):
            with self.assertRaises(UserSkippedError) as ctx:
                self.augment(0, cfg)
        self.assertIn("0/4 reranks succeeded", ctx.exception.reason)
        self.assertIn("connection refused", ctx.exception.reason)

    def test_quorum_tolerates_minority_failures(self):
        cfg = self.config(n_votes=4)

        def flaky(backend, req, rng, vote_index):
            if vote_index == 0:
                raise RerankTransportError("timeout")
            return Permutation.identity(req.K)

        with mock.patch("augmentation.services.rerank_once", side_effect=flaky):
            with self.assertLogs("augmentation.services", level="INFO"):
                edges = self.augment(1, cfg)
        self.assertEqual(edges[0].votes, 3)

    def test_below_quorum_skips(self):
        cfg = self.config(n_votes=4)

        def flaky(backend, req, rng, vote_index):
            if vote_index < 3:
                raise RerankTransportError("timeout")
            return Permutation.identity(req.K)

        with mock.patch("augmentation.services.rerank_once", side_effect=flaky):
            with self.assertRaises(UserSkippedError):
                self.augment(1, cfg)

    def test_missing_metadata_skips(self):
        with self.assertRaisesRegex(UserSkippedError, "missing metadata"):
            self.augment(0, self.config(), catalog=Catalog())

    def test_too_few_candidates_skips(self):
        log = make_log([("u0", "i0"), ("u0", "i1"), ("u1", "i0")])
        graph = build_graph(log)
        E = init_embeddings(graph.n_nodes, 3, seed=0, n_users=graph.n_users)
        with self.assertLogs("embeddings.algorithms", level="WARNING"):
            with self.assertRaises(UserSkippedError):
                augment_user(0, E, graph, None, self.config(), UserHistories(log))

    def test_no_backend(self):
        with self.assertRaises(AugmentationError):
            self.augment(0, AugmentationConfig(n_candidates=4))

    def test_edges_are_novel_and_bounded(self):
        cfg = self.config(edges_per_user=3, backend=simulator(theta=0.2))
        for u in range(self.graph.n_users):
            edges = self.augment(u, cfg)
            self.assertLessEqual(len(edges), 3)
            for edge in edges:
                self.assertFalse(self.graph.has_edge(u, edge.item_index))

    def test_vote_streams_are_seeded(self):
        cfg = self.config(backend=simulator(theta=0.1), edges_per_user=2)
        self.assertEqual(self.augment(5, cfg), self.augment(5, cfg))

    @mock.patch("rerankers.services.requests.post")
    def test_remote_and_simulated_backends_are_interchangeable(self, post):
        response = mock.Mock(status_code=200)
        response.json.return_value = {
            "choices": [{"message": {"content": "<think>ok</think><output>C-A-B-D</output>"}}]
        }
        post.return_value = response

        u = 2
        items = top_k_candidates(self.E, self.graph, u, 4).items
        # slots C, A first, then B, D in retrieval order
        sim = simulator(theta=80.0, preferences={u: [items[2], items[0]]})
        remote = RemoteLLMBackend(
            endpoint="https://rerank.example/v1", model_name="stub", use_cache=False
        )

        simulated = self.augment(u, self.config(edges_per_user=4, backend=sim))
        answered = self.augment(u, self.config(edges_per_user=4, backend=remote))

        self.assertEqual(answered, simulated)
        self.assertEqual([e.item_index for e in answered], [items[2], items[0], items[1], items[3]])
        self.assertEqual(post.call_count, 4)


class BuildRequestTests(AugmentationFixture):
    def test_few_shot_uses_similar_user_history(self):
        cfg = self.config(prompt_mode=MODE_FEW_SHOT)
        candidates = top_k_candidates(self.E, self.graph, 0, 4)
        req = build_request(0, candidates, self.E, self.histories, self.catalog, cfg)
        self.assertEqual(req.mode, MODE_FEW_SHOT)
        self.assertEqual(len(req.fewshot.candidate_ratings), 3)
        ratings = [entry.rating for entry in req.fewshot.candidate_ratings]
        self.assertEqual(ratings, sorted(ratings, reverse=True))
        self.assertEqual([c.letter for c in req.candidates], ["A", "B", "C", "D"])
        self.assertEqual(req.candidate_items, tuple(candidates.items))

    def test_falls_back_to_zero_shot(self):
        log = make_log([("u0", "i0"), ("u1", "i1"), ("u0", "i2"), ("u1", "i3")])
        graph = build_graph(log)
        E = init_embeddings(graph.n_nodes, 3, seed=1, n_users=graph.n_users)
        candidates = top_k_candidates(E, graph, 0, 2)
        with self.assertLogs("augmentation.services", level="INFO") as logs:
            req = build_request(0, candidates, E, UserHistories(log), None, self.config())
        self.assertEqual(req.mode, MODE_ZERO_SHOT)
        self.assertIn("zero-shot", "\n".join(logs.output))
        # no catalog: item ids stand in as titles
        self.assertTrue(all(c.title.startswith("i") for c in req.candidates))


class RunAugmentationTests(AugmentationFixture):
    def test_targets_and_cardinality(self):
        cfg = self.config(quantile=0.25, backend=simulator(theta=0.5))
        result = run_augmentation(self.graph, self.E, self.catalog, cfg, self.histories)
        targets = low_degree_users(self.graph, 0.25)
        self.assertEqual(set(result.targets), targets)
        self.assertEqual(result.skipped, [])
        self.assertEqual(len(result.edges), len(targets))
        self.assertTrue(result.edges.users() <= targets)

    def test_full_quantile_covers_everyone(self):
        cfg = self.config(quantile=1.0, edges_per_user=2)
        result = run_augmentation(self.graph, self.E, self.catalog, cfg, self.histories)
        self.assertEqual(result.targets, list(range(self.graph.n_users)))
        self.assertEqual(len(result.edges), 2 * self.graph.n_users)

    def test_no_train_edge_is_emitted(self):
        for seed in range(5):
            log = fixture_log(seed=seed)
            graph = build_graph(log)
            E = init_embeddings(graph.n_nodes, 4, seed=seed, n_users=graph.n_users)
            cfg = self.config(quantile=1.0, edges_per_user=3, backend=simulator(theta=0.3))
            result = run_augmentation(graph, E, None, cfg, UserHistories(log))
            self.assertFalse(set(result.edges.pairs) & graph.edges)
            self.assertTrue(all(n <= 3 for n in result.edges.per_user_counts().values()))

    def test_parallel_run_matches_serial(self):
        serial = run_augmentation(
            self.graph, self.E, self.catalog, self.config(quantile=1.0), self.histories
        )
        parallel = run_augmentation(
            self.graph, self.E, self.catalog, self.config(quantile=1.0, parallelism=4), self.histories
        )
        self.assertEqual(serial.edges, parallel.edges)

    def test_skips_are_recorded(self):
        cfg = self.config(quantile=1.0)
        with mock.patch(
            "augmentation.services.rerank_once", side_effect=RerankTransportError("down")
        ):
            with self.assertLogs("augmentation.services", level="WARNING"):
                result = run_augmentation(self.graph, self.E, self.catalog, cfg, self.histories)
        self.assertEqual(len(result.edges), 0)
        self.assertEqual([s.user_index for s in result.skipped], result.targets)


class EnsembleStabilityTests(SimpleTestCase):
    """More votes give a steadier, no worse ranking of a hidden preferred item."""

    K = 10

    def setUp(self):
        log = fixture_log(n_users=50, n_items=40, seed=1)
        self.graph = build_graph(log)
        self.E = init_embeddings(self.graph.n_nodes, 6, seed=3, n_users=self.graph.n_users)
        self.histories = UserHistories(log)

        rng = np.random.default_rng(0)
        self.truth, self.slots = {}, {}
        for u in range(self.graph.n_users):
            items = top_k_candidates(self.E, self.graph, u, self.K).items
            self.slots[u] = {item: slot for slot, item in enumerate(items)}
            self.truth[u] = {items[int(rng.integers(self.K))]}
        preferences = {u: list(held) for u, held in self.truth.items()}
        self.backend = simulator(theta=0.3, preferences=preferences)

    def run_ndcg(self, n_votes, seed):
        cfg = AugmentationConfig(
            quantile=1.0,
            n_candidates=self.K,
            n_votes=n_votes,
            edges_per_user=self.K,
            prompt_mode=MODE_ZERO_SHOT,
            backend=self.backend,
            seed=seed,
        )
        result = run_augmentation(self.graph, self.E, None, cfg, self.histories)
        ranked = {}
        for edge in result.edges:
            slot = self.slots[edge.user_index][edge.item_index]
            ranked.setdefault(edge.user_index, []).append((-edge.rrf_score, slot, edge.item_index))
        recs = {u: [item for _, _, item in sorted(rows)] for u, rows in ranked.items()}
        return ndcg_at_k(recs, self.truth, self.K)

    def test_more_votes_reduce_variance_across_runs(self):
        single = [self.run_ndcg(1, seed) for seed in range(60)]
        ensemble = [self.run_ndcg(16, seed) for seed in range(60)]
        self.assertLess(np.var(ensemble), np.var(single))
        self.assertGreaterEqual(np.mean(ensemble), np.mean(single))


class AugmentationJobTests(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        split = leave_one_out_split(fixture_log(n_users=10, seed=4))
        save_split(split, self.tmp / "split")
        self.split = load_split(self.tmp / "split")
        graph = build_graph(self.split.train)
        self.n_nodes = graph.n_nodes
        E = init_embeddings(graph.n_nodes, 4, seed=2, n_users=graph.n_users)
        save_embeddings(E, self.tmp / "emb.vgcl")

    def tearDown(self):
        self._tmp.cleanup()

    def test_writes_edges_and_skip_report(self):
        cfg = AugmentationConfig(n_candidates=3, n_votes=2, backend=simulator(), quantile=0.5)
        summary = run_augmentation_job(self.tmp / "split", self.tmp / "emb.vgcl", self.tmp / "out", cfg)
        edges = read_augmented_edges(summary["edges_path"], self.split.ids)
        self.assertEqual(len(edges), summary["n_edges"])
        self.assertEqual(Path(summary["edges_path"]).name, EDGES_FILE)
        self.assertTrue((self.tmp / "out" / SKIP_REPORT_FILE).exists())
        self.assertIsNone(summary["oracle"])

    def test_oracle_centres_simulator_on_held_out_items(self):
        cfg = AugmentationConfig(
            n_candidates=26, n_votes=3, backend=simulator(theta=80.0), quantile=1.0
        )
        summary = run_augmentation_job(
            self.tmp / "split", self.tmp / "emb.vgcl", self.tmp / "out", cfg, oracle="test"
        )
        edges = read_augmented_edges(summary["edges_path"], self.split.ids)
        preferences = oracle_preferences(self.split, "test")
        hits = [e for e in edges if preferences.get(e.user_index) == [e.item_index]]
        self.assertTrue(hits)
        self.assertEqual(summary["oracle"], "test")

    def test_oracle_needs_simulator(self):
        cfg = AugmentationConfig(n_candidates=3, n_votes=1)
        with self.assertRaises(AugmentationError):
            run_augmentation_job(
                self.tmp / "split", self.tmp / "emb.vgcl", self.tmp / "out", cfg, oracle="test"
            )

    def test_embedding_shape_mismatch(self):
        save_embeddings(EmbeddingMatrix(values=np.zeros((self.n_nodes + 1, 4))), self.tmp / "bad.vgcl")
        cfg = AugmentationConfig(n_candidates=3, n_votes=1, backend=simulator())
        with self.assertRaises(AugmentationError):
            run_augmentation_job(self.tmp / "split", self.tmp / "bad.vgcl", self.tmp / "out", cfg)

    def test_task_runs_eagerly(self):
        result = run_augmentation_task.apply(
            args=(
                str(self.tmp / "split"),
                str(self.tmp / "emb.vgcl"),
                str(self.tmp / "queued"),
                {"n_candidates": 3, "n_votes": 2, "backend": {"simulator": {"theta": 2.0}}},
            )
        )
        summary = result.get()
        self.assertTrue(Path(summary["edges_path"]).exists())
        self.assertEqual(summary["n_skipped"], 0)


class AugmentationConfigSerializerTests(SimpleTestCase):
    def test_defaults_and_backend(self):
        serializer = AugmentationConfigSerializer(
            data={"n_votes": 16, "backend": {"simulator": {"theta": 0.3, "oracle": "validation"}}}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.to_config(preferences={0: [1]})
        self.assertEqual(cfg.n_votes, 16)
        self.assertEqual(cfg.n_candidates, 10)
        self.assertEqual(cfg.backend.theta, 0.3)
        self.assertEqual(cfg.backend.preferences, {0: [1]})
        self.assertEqual(serializer.oracle, "validation")

    def test_overrides_win(self):
        serializer = AugmentationConfigSerializer(data={"n_votes": 16, "quantile": 0.5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.to_config(n_votes=2, quantile=None)
        self.assertEqual((cfg.n_votes, cfg.quantile), (2, 0.5))
        self.assertIsNone(cfg.backend)

    def test_edges_per_user_bounded_by_candidates(self):
        serializer = AugmentationConfigSerializer(data={"n_candidates": 3, "edges_per_user": 4})
        self.assertFalse(serializer.is_valid())
        self.assertIn("edges_per_user", serializer.errors)

    def test_field_errors(self):
        serializer = AugmentationConfigSerializer(
            data={"quantile": 0, "n_candidates": 27, "prompt_mode": "one_shot"}
        )
        self.assertFalse(serializer.is_valid())
        self.assertEqual(set(serializer.errors), {"quantile", "n_candidates", "prompt_mode"})
