import contextlib
import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from interactions.factories import write_tsv
from interactions.persistence import TEST_FILE, TRAIN_FILE, VALIDATION_FILE

from .cli import run_cli
from .serializers import RunConfigError, flatten_errors, load_run_config, validate_run_config


def interaction_rows(n_users=12, n_items=15, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for u in range(n_users):
        count = int(rng.integers(3, 8))
        for t, i in enumerate(rng.choice(n_items, size=count, replace=False)):
            rows.append((f"u{u}", f"i{i}", float(rng.integers(1, 6)), 1000 + 10 * t + u))
    return rows


class CliTestCase(SimpleTestCase):
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def cli(self, *argv):
        """Run the CLI; returns (exit code, stdout, stderr)."""
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = run_cli([str(arg) for arg in argv])
        return code, out.getvalue(), err.getvalue()

    def write_config(self, data, name="run.json"):
        path = self.tmp / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path


class RunCliTests(CliTestCase):
    def test_no_arguments(self):
        code, _, err = self.cli()
        self.assertEqual(code, 2)
        self.assertIn("usage", err)

    def test_help(self):
        code, out, _ = self.cli("--help")
        self.assertEqual(code, 0)
        self.assertIn("verify-bound", out)

    def test_unknown_subcommand(self):
        code, _, err = self.cli("predict")
        self.assertEqual(code, 2)
        self.assertIn("Unknown subcommand: 'predict'", err)

    def test_unknown_flag(self):
        code, _, _ = self.cli("split", "--bogus")
        self.assertEqual(code, 2)

    def test_split_writes_three_artifacts(self):
        source = write_tsv(self.tmp / "ratings.tsv", interaction_rows())
        before = source.read_bytes()
        code, out, _ = self.cli("split", "--input", source, "--out-dir", self.tmp / "runs")
        self.assertEqual(code, 0)
        for name in (TRAIN_FILE, VALIDATION_FILE, TEST_FILE):
            self.assertTrue((self.tmp / "runs" / name).exists(), name)
        summary = json.loads(out)
        self.assertEqual(summary["n_eval_users"], 12)
        self.assertEqual(source.read_bytes(), before)

    def test_split_paths_from_config(self):
        source = write_tsv(self.tmp / "ratings.tsv", interaction_rows())
        config = self.write_config(
            {"paths": {"interactions": str(source), "out_dir": str(self.tmp / "from_config")}}
        )
        code, _, _ = self.cli("split", "--config", config)
        self.assertEqual(code, 0)
        self.assertTrue((self.tmp / "from_config" / TRAIN_FILE).exists())

    def test_missing_input(self):
        code, _, err = self.cli("split", "--input", self.tmp / "nope.tsv", "--out-dir", self.tmp)
        self.assertEqual(code, 2)
        self.assertIn("does not exist", err)

    def test_bad_rating_is_a_domain_error(self):
        source = write_tsv(self.tmp / "ratings.tsv", [("u1", "i1", 9.0, 100)])
        code, _, err = self.cli("split", "--input", source, "--out-dir", self.tmp / "runs")
        self.assertEqual(code, 1)
        self.assertIn("rating out of range", err)

    def test_votegcl_requires_augmented(self):
        code, _, err = self.cli("train", "--mode", "votegcl", "--split-dir", self.tmp)
        self.assertEqual(code, 2)
        self.assertIn("--augmented", err)

    def test_schema_violation_names_field_path(self):
        config = self.write_config({"train": {"learning_rate": -1}, "augmentation": {"n_votes": 0}})
        code, _, err = self.cli("verify-bound", "--config", config, "--trials", 10)
        self.assertEqual(code, 2)
        self.assertIn("train.learning_rate", err)
        self.assertIn("augmentation.n_votes", err)

    def test_missing_config_file(self):
        code, _, err = self.cli("verify-bound", "--config", self.tmp / "missing.json")
        self.assertEqual(code, 2)
        self.assertIn("not found", err)

    def test_verify_bound_table(self):
        code, out, _ = self.cli(
            "verify-bound", "--k", 10, "--votes", "1,2,4,8,16,32", "--theta", 0.3,
            "--trials", 10000, "--mu-samples", 20000, "--out-dir", self.tmp / "bound",
        )
        self.assertEqual(code, 0)
        lines = out.strip().split("\n")
        header = lines[0].split("\t")
        self.assertEqual(header[:5], ["N", "theta", "mu_hat", "empirical_rate", "bound"])
        self.assertEqual(header[5:], ["stderr", "gap", "rank_gap", "score_gap"])
        rows = [dict(zip(header, line.split("\t"))) for line in lines[1:]]
        self.assertEqual([int(r["N"]) for r in rows], [1, 2, 4, 8, 16, 32])
        for raw in rows:
            self.assertEqual(raw.pop("gap"), "score")
            row = {key: float(value) for key, value in raw.items()}
            self.assertAlmostEqual(row["mu_hat"], row["score_gap"], places=5)
            self.assertLessEqual(row["empirical_rate"], row["bound"] + 3 * row["stderr"] + 1e-6)
        self.assertEqual(
            (self.tmp / "bound" / "bound_verification.tsv").read_text(), out
        )

    def test_verify_bound_rejects_bad_votes(self):
        code, _, _ = self.cli("verify-bound", "--votes", "1,x")
        self.assertEqual(code, 2)


class PipelineTests(CliTestCase):
    """split -> train -> augment (simulator) -> train votegcl -> eval"""

    def setUp(self):
        super().setUp()
        self.source = write_tsv(self.tmp / "ratings.tsv", interaction_rows(seed=3))
        self.runs = self.tmp / "runs"
        self.config = self.write_config(
            {
                "seed": 5,
                "paths": {"split_dir": str(self.runs)},
                "train": {"epochs": 2, "dim": 8, "batch_size": 16},
                "augmentation": {"n_candidates": 4, "n_votes": 3, "quantile": 0.5},
                "evaluation": {"cutoffs": [3, 5]},
            }
        )
        code, _, err = self.cli("split", "--input", self.source, "--out-dir", self.runs)
        self.assertEqual(code, 0, err)

    def train(self, out_name, *extra):
        code, out, err = self.cli(
            "train", "--config", self.config, "--out-dir", self.runs / out_name, *extra
        )
        self.assertEqual(code, 0, err)
        return json.loads(out)

    def test_end_to_end_with_simulator(self):
        vanilla = self.train("vanilla")
        self.assertEqual(vanilla["seed"], 5)

        code, out, err = self.cli(
            "augment", "--config", self.config, "--embeddings", vanilla["embeddings"],
            "--out-dir", self.runs / "aug", "--theta", 50, "--oracle", "validation",
        )
        self.assertEqual(code, 0, err)
        augmented = json.loads(out)
        self.assertGreater(augmented["n_edges"], 0)
        self.assertEqual(augmented["oracle"], "validation")

        votegcl = self.train("votegcl", "--mode", "votegcl", "--augmented", augmented["edges_path"])
        self.assertEqual(votegcl["mode"], "votegcl")

        code, out, err = self.cli(
            "eval", "--config", self.config, "--embeddings", votegcl["embeddings"],
            "--out-dir", self.runs / "votegcl",
        )
        self.assertEqual(code, 0, err)
        report = json.loads(out)
        self.assertEqual(set(report), {"3", "5", "n_eval_users"})
        for K in ("3", "5"):
            for value in report[K].values():
                self.assertGreaterEqual(value, 0.0)
                self.assertLessEqual(value, 1.0)
        self.assertTrue((self.runs / "votegcl" / "eval_report.json").exists())

    def test_training_is_reproducible(self):
        first = self.train("a")
        second = self.train("b")
        self.assertEqual(
            Path(first["embeddings"]).read_bytes(), Path(second["embeddings"]).read_bytes()
        )
        self.assertEqual(Path(first["metrics"]).read_text(), Path(second["metrics"]).read_text())

    def test_flags_override_config(self):
        summary = self.train("flags", "--epochs", 1, "--seed", 9)
        self.assertEqual((summary["epochs"], summary["seed"]), (1, 9))

    def test_augment_needs_backend(self):
        vanilla = self.train("vanilla")
        code, _, err = self.cli(
            "augment", "--config", self.config, "--embeddings", vanilla["embeddings"],
            "--out-dir", self.runs / "aug",
        )
        self.assertEqual(code, 2)
        self.assertIn("backend", err)

    def test_eval_cutoff_flag(self):
        vanilla = self.train("vanilla")
        code, out, err = self.cli(
            "eval", "--config", self.config, "--embeddings", vanilla["embeddings"],
            "--out-dir", self.runs / "vanilla", "--cutoffs", "1,2", "--target", "validation",
        )
        self.assertEqual(code, 0, err)
        self.assertEqual(set(json.loads(out)), {"1", "2", "n_eval_users"})


class RunConfigTests(SimpleTestCase):
    def test_empty_config(self):
        config = load_run_config()
        self.assertIsNone(config.path("out_dir"))
        self.assertEqual(config.evaluation_options()["cutoffs"], [10, 20])

    def test_top_level_seed_reaches_sections(self):
        config = validate_run_config({"seed": 3, "train": {"epochs": 1}})
        self.assertEqual(config.train_config().seed, 3)
        self.assertEqual(config.section_data("augmentation"), {"seed": 3})

    def test_section_seed_wins(self):
        config = validate_run_config({"seed": 3, "train": {"seed": 8}})
        self.assertEqual(config.train_config().seed, 8)

    def test_nested_error_paths(self):
        with self.assertRaises(RunConfigError) as ctx:
            validate_run_config(
                {"augmentation": {"backend": {"remote_llm": {"model_name": "m"}}}}
            )
        self.assertIn("augmentation.backend.remote_llm.endpoint", str(ctx.exception))

    def test_backend_kind_error_attaches_to_section(self):
        with self.assertRaises(RunConfigError) as ctx:
            validate_run_config({"augmentation": {"backend": {}}})
        self.assertTrue(any(e.startswith("augmentation.backend:") for e in ctx.exception.errors))

    def test_not_an_object(self):
        with self.assertRaises(RunConfigError):
            validate_run_config([1, 2])

    def test_flatten_errors(self):
        detail = {"a": {"b": ["bad"]}, "non_field_errors": ["top"], "c": [{"d": ["x"]}]}
        self.assertEqual(flatten_errors(detail), ["a.b: bad", "top", "c.0.d: x"])
