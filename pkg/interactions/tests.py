import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from augmentation.models import AugmentedEdge, AugmentedEdgeSet, SkipRecord
from embeddings.models import EmbeddingMatrix

from .factories import make_log, write_tsv
from .loaders import (
    EmptyInteractionFileError,
    InteractionFormatError,
    RatingOutOfRangeError,
    load_catalog,
    load_interactions,
)
from .models import DataIOError, IdTable, UnknownIdentifierError
from .persistence import (
    EMBEDDING_HEADER,
    EmbeddingFormatError,
    load_embeddings,
    load_split,
    read_augmented_edges,
    save_embeddings,
    save_split,
    write_augmented_edges,
    write_skip_report,
)
from .splits import leave_one_out_split


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()


class LoadInteractionsTests(TempDirMixin, SimpleTestCase):
    def test_single_record(self):
        path = write_tsv(self.tmp / "x.tsv", [("u1", "i1", "5.0", "100")])
        log = load_interactions(path)
        self.assertEqual(len(log), 1)
        record = log.records[0]
        self.assertEqual((record.user_id, record.item_id, record.rating, record.timestamp), ("u1", "i1", 5.0, 100))

    def test_duplicate_pair_keeps_latest_timestamp(self):
        path = write_tsv(self.tmp / "x.tsv", [("u1", "i1", "3.0", "100"), ("u1", "i1", "4.0", "200")])
        log = load_interactions(path)
        self.assertEqual(len(log), 1)
        self.assertEqual(log.records[0].timestamp, 200)
        self.assertEqual(log.records[0].rating, 4.0)

    def test_duplicate_pair_older_line_later_does_not_win(self):
        path = write_tsv(self.tmp / "x.tsv", [("u1", "i1", "3.0", "200"), ("u1", "i1", "4.0", "100")])
        log = load_interactions(path)
        self.assertEqual(log.records[0].timestamp, 200)

    def test_rating_out_of_range(self):
        path = write_tsv(self.tmp / "x.tsv", [("u1", "i1", "9.0", "100")])
        with self.assertRaisesRegex(RatingOutOfRangeError, "rating out of range"):
            load_interactions(path)

    def test_malformed_line_reports_line_number(self):
        path = self.tmp / "x.tsv"
        path.write_text("# header\nu1\ti1\t5.0\t1\nu2\ti2\t5.0\n", encoding="utf-8")
        with self.assertRaises(InteractionFormatError) as ctx:
            load_interactions(path)
        self.assertEqual(ctx.exception.line_number, 3)
        self.assertIn("line 3", str(ctx.exception))

    def test_empty_file(self):
        path = self.tmp / "x.tsv"
        path.write_text("# only a comment\n\n", encoding="utf-8")
        with self.assertRaises(EmptyInteractionFileError):
            load_interactions(path)

    def test_id_interning_round_trip(self):
        path = write_tsv(
            self.tmp / "x.tsv",
            [("u2", "i9", "1", "1"), ("u1", "i9", "2", "2"), ("u2", "i3", "3", "3")],
        )
        log = load_interactions(path)
        ids = log.ids
        self.assertEqual(ids.user_ids, ("u2", "u1"))
        self.assertEqual(ids.item_ids, ("i9", "i3"))
        for user_id in ids.user_ids:
            self.assertEqual(ids.user_id(ids.user_index(user_id)), user_id)
        for item_id in ids.item_ids:
            self.assertEqual(ids.item_id(ids.item_index(item_id)), item_id)


class CatalogTests(TempDirMixin, SimpleTestCase):
    def test_load_catalog(self):
        path = write_tsv(
            self.tmp / "meta.tsv",
            [("i1", "Toy Story", "1995", "Animation|Comedy"), ("i2", "Heat", "", "Crime")],
        )
        catalog = load_catalog(path)
        self.assertEqual(len(catalog), 2)
        self.assertEqual(catalog.require("i1").genres, ("Animation", "Comedy"))
        self.assertEqual(catalog.require("i2").year, 0)
        with self.assertRaises(UnknownIdentifierError):
            catalog.require("missing")

    def test_bad_year(self):
        path = write_tsv(self.tmp / "meta.tsv", [("i1", "Toy Story", "nineteen", "Animation")])
        with self.assertRaisesRegex(InteractionFormatError, "line 1"):
            load_catalog(path)


class LeaveOneOutSplitTests(SimpleTestCase):
    def test_chronological_split(self):
        log = make_log([("u1", "a", 4.0, 5), ("u1", "b", 4.0, 1), ("u1", "c", 4.0, 3)])
        split = leave_one_out_split(log)
        self.assertEqual(split.test, {"u1": "a"})
        self.assertEqual(split.validation, {"u1": "c"})
        self.assertEqual([r.item_id for r in split.train], ["b"])
        self.assertEqual(split.eval_users, {"u1"})

    def test_short_history_goes_to_train(self):
        log = make_log([("u1", "a"), ("u2", "a"), ("u2", "b"), ("u2", "c")])
        split = leave_one_out_split(log)
        self.assertNotIn("u1", split.eval_users)
        self.assertIn("a", [r.item_id for r in split.train if r.user_id == "u1"])

    def test_equal_timestamps_follow_file_order(self):
        log = make_log([("u1", "a", 4.0, 7), ("u1", "b", 4.0, 7), ("u1", "c", 4.0, 7)])
        split = leave_one_out_split(log)
        self.assertEqual(split.test["u1"], "c")
        self.assertEqual(split.validation["u1"], "b")
        self.assertEqual([r.item_id for r in split.train], ["a"])

    def test_split_invariants_on_random_log(self):
        rng = np.random.default_rng(3)
        rows = []
        for u in range(12):
            for i in rng.choice(30, size=rng.integers(1, 8), replace=False):
                rows.append((f"u{u}", f"i{i}", 3.0, int(rng.integers(0, 5))))
        log = make_log(rows)
        split = leave_one_out_split(log)
        by_user = log.by_user()

        for user_id in split.eval_users:
            keys = {r.item_id: r.chronological_key for r in by_user[user_id]}
            train_items = [r.item_id for r in split.train if r.user_id == user_id]
            val, test = split.validation[user_id], split.test[user_id]
            self.assertLess(keys[val], keys[test])
            for item_id in train_items:
                self.assertLess(keys[item_id], keys[val])
            self.assertNotIn(val, train_items)
            self.assertNotIn(test, train_items)

    def test_empty_log(self):
        with self.assertRaises(DataIOError):
            leave_one_out_split(make_log([]))


class EmbeddingPersistenceTests(TempDirMixin, SimpleTestCase):
    def test_zero_matrix_round_trip(self):
        path = self.tmp / "e.vgcl"
        save_embeddings(EmbeddingMatrix(values=np.zeros((2, 3), dtype=np.float32)), path)
        loaded = load_embeddings(path)
        np.testing.assert_array_equal(loaded.values, np.zeros((2, 3)))

    def test_pi_round_trip_is_bit_exact(self):
        path = self.tmp / "e.vgcl"
        values = np.array([[np.float32(3.1415927)]], dtype=np.float32)
        save_embeddings(EmbeddingMatrix(values=values), path)
        loaded = load_embeddings(path)
        self.assertEqual(loaded.values.dtype, np.float32)
        self.assertEqual(loaded.values.tobytes(), values.tobytes())

    def test_random_float32_round_trip(self):
        path = self.tmp / "e.vgcl"
        values = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
        save_embeddings(EmbeddingMatrix(values=values, n_users=3), path)
        loaded = load_embeddings(path, n_users=3)
        np.testing.assert_array_equal(loaded.values, values)
        self.assertEqual(loaded.n_users, 3)

    def test_bad_magic(self):
        path = self.tmp / "e.vgcl"
        save_embeddings(EmbeddingMatrix(values=np.ones((1, 1), dtype=np.float32)), path)
        data = bytearray(path.read_bytes())
        data[0:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with self.assertRaisesRegex(EmbeddingFormatError, "bad magic"):
            load_embeddings(path)

    def test_version_mismatch(self):
        path = self.tmp / "e.vgcl"
        path.write_bytes(EMBEDDING_HEADER.pack(b"VGCL", 2, 1, 1) + b"\x00" * 4)
        with self.assertRaisesRegex(EmbeddingFormatError, "version mismatch"):
            load_embeddings(path)

    def test_truncated_payload(self):
        path = self.tmp / "e.vgcl"
        save_embeddings(EmbeddingMatrix(values=np.ones((2, 2), dtype=np.float32)), path)
        path.write_bytes(path.read_bytes()[:-3])
        with self.assertRaisesRegex(EmbeddingFormatError, "truncated"):
            load_embeddings(path)

    def test_header_inconsistent_with_payload(self):
        path = self.tmp / "e.vgcl"
        path.write_bytes(EMBEDDING_HEADER.pack(b"VGCL", 1, 1, 1) + b"\x00" * 8)
        with self.assertRaisesRegex(EmbeddingFormatError, "inconsistent"):
            load_embeddings(path)

    def test_refuses_non_finite(self):
        with self.assertRaises(EmbeddingFormatError):
            save_embeddings(EmbeddingMatrix(values=np.array([[np.nan]])), self.tmp / "e.vgcl")


class AugmentedEdgePersistenceTests(TempDirMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.ids = IdTable(user_ids=["u1", "u2"], item_ids=[f"i{n}" for n in range(10)])

    def test_empty_set_writes_header_only(self):
        path = self.tmp / "edges.tsv"
        write_augmented_edges(AugmentedEdgeSet(), path, self.ids)
        self.assertEqual(path.read_text(encoding="utf-8"), "user_id\titem_id\trrf_score\tvotes\n")
        self.assertEqual(len(read_augmented_edges(path, self.ids)), 0)

    def test_single_edge_round_trip(self):
        path = self.tmp / "edges.tsv"
        edges = AugmentedEdgeSet([AugmentedEdge(0, 9, rrf_score=1.333333333, votes=8)])
        write_augmented_edges(edges, path, self.ids)
        self.assertIn("u1\ti9\t1.333333333\t8", path.read_text(encoding="utf-8"))
        self.assertEqual(read_augmented_edges(path, self.ids), edges)

    def test_scores_use_nine_decimal_places(self):
        path = self.tmp / "edges.tsv"
        edges = AugmentedEdgeSet(
            [AugmentedEdge(0, 1, rrf_score=1 / 26, votes=1), AugmentedEdge(1, 2, rrf_score=12.5, votes=16)]
        )
        write_augmented_edges(edges, path, self.ids)
        rows = [line.split("\t") for line in path.read_text(encoding="utf-8").splitlines()[1:]]
        self.assertEqual([row[2] for row in rows], ["0.038461538", "12.500000000"])
        back = read_augmented_edges(path, self.ids)
        self.assertAlmostEqual(back[0].rrf_score, 1 / 26, delta=5e-10)

    def test_unknown_item_on_read(self):
        path = self.tmp / "edges.tsv"
        write_tsv(path, [("user_id", "item_id", "rrf_score", "votes"), ("u1", "i99", "1.0", "1")])
        with self.assertRaises(UnknownIdentifierError):
            read_augmented_edges(path, self.ids)

    def test_skip_report(self):
        path = self.tmp / "skip.tsv"
        write_skip_report(
            [SkipRecord(1, "0/8 reranks\tsucceeded"), SkipRecord(0, "only 1 eligible candidates")],
            path,
            self.ids,
        )
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "user_id\treason")
        self.assertEqual(lines[1], "u1\tonly 1 eligible candidates")
        self.assertEqual(lines[2], "u2\t0/8 reranks succeeded")


class SplitPersistenceTests(TempDirMixin, SimpleTestCase):
    def test_save_and_load_split(self):
        rows = [
            (f"u{u}", f"i{i}", 3.0 + (i % 2), t)
            for t, (u, i) in enumerate(itertools.product(range(4), range(5)))
        ]
        split = leave_one_out_split(make_log(rows))
        paths = save_split(split, self.tmp)
        self.assertTrue(all(path.exists() for path in paths.values()))

        loaded = load_split(self.tmp)
        self.assertEqual(loaded.validation, split.validation)
        self.assertEqual(loaded.test, split.test)
        self.assertEqual(loaded.eval_users, split.eval_users)
        self.assertEqual(
            [(r.user_id, r.item_id, r.rating, r.timestamp) for r in loaded.train],
            [(r.user_id, r.item_id, r.rating, r.timestamp) for r in split.train],
        )
        # Reloading rebuilds the same id table
        self.assertEqual(load_split(self.tmp).ids, loaded.ids)
