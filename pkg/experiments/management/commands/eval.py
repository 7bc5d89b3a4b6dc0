"""
Evaluate saved embeddings on the test (or validation) split.

Usage:
    python manage.py eval --split-dir runs/ --embeddings runs/vanilla/embeddings.vgcl \
        --out-dir runs/vanilla --cutoffs 10,20
"""

from evaluation.services import evaluate
from graphs.services import build_graph
from interactions.persistence import load_embeddings, load_split

from ..base import ExperimentCommand, parse_csv

REPORT_FILE = "eval_report.json"


class Command(ExperimentCommand):
    help = "Compute Recall / NDCG / APLT at each cutoff"

    def add_command_arguments(self, parser):
        parser.add_argument("--split-dir", dest="split_dir")
        parser.add_argument("--embeddings")
        parser.add_argument("--out-dir", dest="out_dir")
        parser.add_argument("--cutoffs", help="Comma-separated cutoffs, e.g. 10,20")
        parser.add_argument("--target", choices=["test", "validation"])
        parser.add_argument("--head-fraction", dest="head_fraction", type=float)

    def run(self, options):
        eval_options = self.run_config.evaluation_options()
        if options.get("cutoffs"):
            eval_options["cutoffs"] = parse_csv(options["cutoffs"], int)
        for key in ("target", "head_fraction"):
            if options.get(key) is not None:
                eval_options[key] = options[key]

        split_dir = self.resolve_path(options, "split_dir")
        embeddings_path = self.resolve_path(options, "embeddings")
        out_dir = self.out_dir(options)

        split = load_split(split_dir)
        graph = build_graph(split.train)
        embeddings = load_embeddings(embeddings_path, n_users=graph.n_users)

        report = evaluate(
            embeddings,
            split,
            graph,
            Ks=eval_options["cutoffs"],
            target=eval_options["target"],
            head_fraction=eval_options["head_fraction"],
        )
        report.write(out_dir / REPORT_FILE)
        self.stdout.write(report.to_json())
