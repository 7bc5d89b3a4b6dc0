import math
import random

import numpy as np
from django.test import SimpleTestCase

from .algorithms import rank_histogram, rrf_scores, select_top_p
from .bounds import (
    GAP_RANK,
    GAP_SCORE,
    VERIFY_COLUMNS,
    decay_sign_test,
    empirical_misrank_rate,
    estimate_rank_gap,
    estimate_score_gap,
    hoeffding_bound,
    verify_bound,
)
from .mallows import (
    all_permutations,
    kendall_tau,
    mallows_normalizer,
    mallows_probability,
    mallows_sample,
    mallows_sample_many,
)
from .models import (
    BoundParams,
    EnsembleError,
    InvalidPermutationError,
    MallowsModel,
    Permutation,
    RrfScores,
    TheoremInapplicableError,
)


def reverse(K):
    return Permutation(tuple(range(K - 1, -1, -1)))


class PermutationTests(SimpleTestCase):
    def test_rejects_repeated_rank(self):
        with self.assertRaises(InvalidPermutationError):
            Permutation((0, 0, 1))

    def test_rejects_out_of_range_rank(self):
        with self.assertRaises(InvalidPermutationError):
            Permutation((1, 2, 3))

    def test_from_order_inverts_order(self):
        perm = Permutation.from_order([1, 0, 2])
        self.assertEqual(perm.ranks, (1, 0, 2))
        self.assertEqual(Permutation.from_order([2, 0, 1]).order, (2, 0, 1))

    def test_identity(self):
        self.assertEqual(Permutation.identity(4).order, (0, 1, 2, 3))


class RrfScoresTests(SimpleTestCase):
    def test_single_identity(self):
        scores = rrf_scores([Permutation.identity(3)])
        np.testing.assert_allclose(scores.tolist(), [1.0, 0.5, 1 / 3])
        self.assertEqual(scores.votes, 1)

    def test_two_reversed(self):
        scores = rrf_scores([Permutation.identity(3), reverse(3)])
        np.testing.assert_allclose(scores.tolist(), [4 / 3, 1.0, 4 / 3])

    def test_linear_in_copies(self):
        for perm in all_permutations(3):
            single = np.array(rrf_scores([perm]).tolist())
            for N in (1, 2, 3):
                np.testing.assert_allclose(rrf_scores([perm] * N).tolist(), N * single)

    def test_accepts_rank_tuples(self):
        self.assertEqual(rrf_scores([(1, 0)]).tolist(), [0.5, 1.0])

    def test_rejects_mixed_lengths(self):
        with self.assertRaises(InvalidPermutationError):
            rrf_scores([Permutation.identity(3), Permutation.identity(4)])

    def test_rejects_non_bijective_tuple(self):
        with self.assertRaises(InvalidPermutationError):
            rrf_scores([(0, 0, 1)])

    def test_empty_list(self):
        with self.assertRaises(EnsembleError):
            rrf_scores([])

    def test_scores_within_bounds(self):
        rng = np.random.default_rng(3)
        K, N = 10, 7
        model = MallowsModel(center=Permutation.identity(K), theta=0.4)
        perms = [Permutation(tuple(r)) for r in mallows_sample_many(model, N, rng).tolist()]
        scores = np.array(rrf_scores(perms).tolist())
        self.assertTrue(np.all(scores >= N / K - 1e-12))
        self.assertTrue(np.all(scores <= N + 1e-12))

    def test_shuffle_invariance_is_bit_exact(self):
        rng = np.random.default_rng(17)
        model = MallowsModel(center=Permutation.identity(8), theta=0.2)
        perms = [Permutation(tuple(r)) for r in mallows_sample_many(model, 12, rng).tolist()]
        expected = rrf_scores(perms).scores
        shuffler = random.Random(5)
        for _ in range(10):
            shuffled = perms[:]
            shuffler.shuffle(shuffled)
            np.testing.assert_array_equal(rrf_scores(shuffled).scores, expected)

    def test_histogram_rows_sum_to_votes(self):
        counts = rank_histogram([Permutation.identity(4), reverse(4), reverse(4)])
        self.assertEqual(counts.sum(axis=1).tolist(), [3, 3, 3, 3])
        self.assertEqual(counts[0].tolist(), [1, 0, 0, 2])


class SelectTopPTests(SimpleTestCase):
    def test_tie_goes_to_retrieval_order(self):
        scores = rrf_scores([Permutation.identity(3), reverse(3)])
        self.assertEqual(select_top_p(scores, 1, [0, 1, 2]), [0])
        self.assertEqual(select_top_p(scores, 1, [2, 1, 0]), [2])

    def test_all_slots(self):
        scores = RrfScores(scores=np.array([0.5, 2.0, 1.0]), votes=2)
        self.assertEqual(select_top_p(scores, 3), [1, 2, 0])

    def test_strictly_decreasing_prefix(self):
        scores = RrfScores(scores=np.array([3.0, 2.0, 1.0, 0.5]), votes=3)
        self.assertEqual(select_top_p(scores, 2), [0, 1])

    def test_p_out_of_range(self):
        scores = RrfScores(scores=np.array([1.0, 0.5]), votes=1)
        for p in (0, 3):
            with self.assertRaises(EnsembleError):
                select_top_p(scores, p)

    def test_candidate_order_must_cover_slots(self):
        scores = RrfScores(scores=np.array([1.0, 0.5]), votes=1)
        with self.assertRaises(EnsembleError):
            select_top_p(scores, 1, [0, 0])


class MallowsTests(SimpleTestCase):
    def test_kendall_tau(self):
        self.assertEqual(kendall_tau(Permutation.identity(4), Permutation.identity(4)), 0)
        self.assertEqual(kendall_tau(Permutation.identity(4), reverse(4)), 6)
        self.assertEqual(kendall_tau(Permutation.identity(3), Permutation((1, 0, 2))), 1)

    def test_kendall_tau_length_mismatch(self):
        with self.assertRaises(ValueError):
            kendall_tau(Permutation.identity(2), Permutation.identity(3))

    def test_probabilities_sum_to_one(self):
        for theta in (0.0, 0.5, 2.0):
            model = MallowsModel(center=Permutation.from_order([2, 0, 3, 1]), theta=theta)
            total = sum(mallows_probability(model, p) for p in all_permutations(4))
            self.assertAlmostEqual(total, 1.0, places=12)

    def test_normalizer_at_zero_dispersion(self):
        self.assertAlmostEqual(mallows_normalizer(0.0, 4), math.factorial(4))

    def test_uniform_at_zero_dispersion(self):
        model = MallowsModel(center=Permutation.identity(3), theta=0.0)
        ranks = mallows_sample_many(model, 100000, np.random.default_rng(0))
        counts = {}
        for row in map(tuple, ranks.tolist()):
            counts[row] = counts.get(row, 0) + 1
        self.assertEqual(len(counts), 6)
        for count in counts.values():
            self.assertAlmostEqual(count / 100000, 1 / 6, delta=0.02)

    def test_frequencies_match_exact_probabilities(self):
        model = MallowsModel(center=Permutation.from_order([1, 2, 0]), theta=0.7)
        ranks = mallows_sample_many(model, 100000, np.random.default_rng(1))
        for perm in all_permutations(3):
            freq = float(np.mean(np.all(ranks == np.array(perm.ranks), axis=1)))
            self.assertAlmostEqual(freq, mallows_probability(model, perm), delta=0.01)

    def test_large_dispersion_returns_center(self):
        center = Permutation.from_order([3, 1, 0, 2])
        model = MallowsModel(center=center, theta=50.0)
        ranks = mallows_sample_many(model, 10000, np.random.default_rng(2))
        freq = float(np.mean(np.all(ranks == np.array(center.ranks), axis=1)))
        self.assertGreater(freq, 0.999)

    def test_samples_are_bijective(self):
        model = MallowsModel(center=Permutation.identity(7), theta=0.3)
        rng = np.random.default_rng(4)
        for _ in range(50):
            perm = mallows_sample(model, rng)
            self.assertEqual(sorted(perm.ranks), list(range(7)))

    def test_invalid_dispersion(self):
        for theta in (-0.1, float("inf"), float("nan")):
            with self.assertRaises(EnsembleError):
                MallowsModel(center=Permutation.identity(3), theta=theta)


class HoeffdingBoundTests(SimpleTestCase):
    def test_closed_form(self):
        params = BoundParams.for_reciprocal_rank(8, 1.0, 10)
        self.assertAlmostEqual(params.A, 0.1)
        self.assertAlmostEqual(hoeffding_bound(params), math.exp(-8 / 1.62), places=10)
        self.assertAlmostEqual(hoeffding_bound(params), 0.0071670, places=7)

    def test_monotone_in_votes(self):
        bounds = [hoeffding_bound(BoundParams(N=N, mu=0.3, A=0.1, B=1.0)) for N in range(1, 40)]
        self.assertTrue(all(b > c for b, c in zip(bounds, bounds[1:])))
        self.assertLess(bounds[-1], bounds[0])

    def test_clamped_to_one(self):
        self.assertLessEqual(hoeffding_bound(BoundParams(N=1, mu=1e-9, A=0.0, B=1.0)), 1.0)

    def test_zero_mean_gap(self):
        with self.assertRaisesRegex(TheoremInapplicableError, "theorem inapplicable"):
            hoeffding_bound(BoundParams(N=4, mu=0.0, A=0.1, B=1.0))

    def test_one_indexed_constant(self):
        params = BoundParams.for_reciprocal_rank(4, 0.5, 10, indexing="one")
        self.assertAlmostEqual(params.A, 1 / 11)

    def test_invalid_params(self):
        with self.assertRaises(EnsembleError):
            BoundParams(N=0, mu=1.0, A=0.1, B=1.0)
        with self.assertRaises(EnsembleError):
            BoundParams(N=1, mu=1.0, A=1.0, B=1.0)
        with self.assertRaises(EnsembleError):
            BoundParams.for_reciprocal_rank(1, 1.0, 10, indexing="two")


class GapEstimateTests(SimpleTestCase):
    def test_same_item_is_zero(self):
        model = MallowsModel(center=Permutation.identity(4), theta=0.5)
        self.assertEqual(estimate_rank_gap(model, 2, 2, 100), 0.0)
        self.assertEqual(estimate_score_gap(model, 2, 2, 100), 0.0)

    def test_degenerate_distribution(self):
        model = MallowsModel(center=Permutation.identity(5), theta=60.0)
        mu = estimate_rank_gap(model, 1, 0, 2000, np.random.default_rng(0))
        self.assertAlmostEqual(mu, 1.0, delta=1e-3)
        gap = estimate_score_gap(model, 1, 0, 2000, np.random.default_rng(0))
        self.assertAlmostEqual(gap, 0.5, delta=1e-3)

    def test_uniform_gap_is_zero(self):
        model = MallowsModel(center=Permutation.identity(3), theta=0.0)
        n = 100000
        mu = estimate_rank_gap(model, 1, 0, n, np.random.default_rng(9))
        # rank difference of two slots under uniform K=3 has variance 4/3
        self.assertLess(abs(mu), 3 * math.sqrt(4 / 3 / n))

    def test_invalid_samples(self):
        model = MallowsModel(center=Permutation.identity(3), theta=0.0)
        with self.assertRaises(EnsembleError):
            estimate_rank_gap(model, 0, 1, 0)


class MisrankRateTests(SimpleTestCase):
    def test_more_votes_misrank_less(self):
        model = MallowsModel(center=Permutation.identity(10), theta=0.3)
        trials = 20000
        low = empirical_misrank_rate(model, 1, 0, 1, trials, np.random.default_rng(1))
        high = empirical_misrank_rate(model, 1, 0, 16, trials, np.random.default_rng(2))
        noise = 3 * math.sqrt(low * (1 - low) / trials + high * (1 - high) / trials)
        self.assertLessEqual(high, low + noise)

    def test_deterministic_ranker_never_misranks(self):
        model = MallowsModel(center=Permutation.identity(6), theta=80.0)
        for N in (1, 4):
            self.assertEqual(empirical_misrank_rate(model, 1, 0, N, 2000), 0.0)

    def test_invalid_arguments(self):
        model = MallowsModel(center=Permutation.identity(3), theta=1.0)
        with self.assertRaises(EnsembleError):
            empirical_misrank_rate(model, 1, 0, 0, 10)


class VerifyBoundTests(SimpleTestCase):
    def test_grid_within_bound(self):
        rows = verify_bound(
            K=10, votes=(1, 2, 4, 8, 16, 32), thetas=(0.1, 0.3, 1.0),
            trials=4000, mu_samples=40000, seed=0,
        )
        self.assertEqual(len(rows), 18)
        for row in rows:
            self.assertEqual(len(row.as_tuple()), len(VERIFY_COLUMNS))
            self.assertGreater(row.score_gap, 0.0)
            self.assertGreater(row.rank_gap, 0.0)
            self.assertEqual(row.gap, GAP_SCORE)
            self.assertTrue(row.within_bound, row)

    def test_bound_decreases_with_votes(self):
        rows = verify_bound(K=6, votes=(1, 4, 16), thetas=(0.5,), trials=500, mu_samples=5000)
        bounds = [row.bound for row in rows]
        self.assertEqual(bounds, sorted(bounds, reverse=True))

    def test_seeded_grid_is_reproducible(self):
        kwargs = dict(K=5, votes=(1, 2), thetas=(0.3, 1.0), trials=300, mu_samples=2000, seed=4)
        first = [row.as_tuple() for row in verify_bound(**kwargs)]
        second = [row.as_tuple() for row in verify_bound(**kwargs)]
        self.assertEqual(first, second)

    def test_rejects_small_K_and_unknown_gap(self):
        with self.assertRaises(EnsembleError):
            verify_bound(K=1)
        with self.assertRaises(EnsembleError):
            verify_bound(K=4, gap="median", trials=10, mu_samples=10)

    def test_mu_hat_is_the_gap_the_bound_used(self):
        kwargs = dict(K=6, votes=(1, 8), thetas=(0.5,), trials=200, mu_samples=4000, seed=3)
        for gap, attribute in ((GAP_SCORE, "score_gap"), (GAP_RANK, "rank_gap")):
            for row in verify_bound(gap=gap, **kwargs):
                self.assertEqual(row.gap, gap)
                self.assertEqual(row.mu_hat, getattr(row, attribute))
                expected = hoeffding_bound(BoundParams.for_reciprocal_rank(row.N, row.mu_hat, 6))
                self.assertEqual(row.bound, expected)
                record = dict(zip(VERIFY_COLUMNS, row.as_tuple()))
                self.assertEqual(record["mu_hat"], record[attribute])


class DecaySignTestTests(SimpleTestCase):
    def test_strictly_decreasing(self):
        result = decay_sign_test([0.4, 0.2, 0.1, 0.05, 0.01, 0.0])
        self.assertEqual((result.decreasing, result.increasing, result.ties), (5, 0, 0))
        self.assertTrue(result.passed)
        self.assertAlmostEqual(result.p_value, 1 / 32)

    def test_zeros_tie(self):
        result = decay_sign_test([0.1, 0.0, 0.0])
        self.assertEqual((result.decreasing, result.ties), (1, 1))

    def test_increasing_fails(self):
        self.assertFalse(decay_sign_test([0.01, 0.02, 0.03]).passed)

    def test_no_informative_pairs(self):
        result = decay_sign_test([0.0, 0.0])
        self.assertEqual(result.p_value, 1.0)
        self.assertFalse(result.passed)

    def test_measured_rates_decay(self):
        rows = verify_bound(K=10, votes=(1, 2, 4, 8), thetas=(0.3,), trials=5000, mu_samples=5000)
        self.assertTrue(decay_sign_test([row.empirical_rate for row in rows]).passed)
