"""
Train LightGCN (vanilla) or VoteGCL on a split.

Usage:
    python manage.py train --split-dir runs/ --out-dir runs/vanilla
    python manage.py train --mode votegcl --augmented runs/aug/augmented_edges.tsv \
        --split-dir runs/ --out-dir runs/votegcl
"""

from graphs.services import build_graph, merge_augmented
from interactions.persistence import load_split, read_augmented_edges, save_embeddings
from training.services import MODE_VANILLA, MODE_VOTEGCL, train_vanilla, train_votegcl

from ..base import ExperimentCommand, usage_error

EMBEDDINGS_FILE = "embeddings.vgcl"
METRICS_FILE = "train_metrics.jsonl"


class Command(ExperimentCommand):
    help = "Train vanilla LightGCN or VoteGCL and save the final embeddings"

    def add_command_arguments(self, parser):
        parser.add_argument("--mode", choices=[MODE_VANILLA, MODE_VOTEGCL], default=MODE_VANILLA)
        parser.add_argument("--split-dir", dest="split_dir")
        parser.add_argument("--augmented", help="Augmented edges TSV (votegcl mode)")
        parser.add_argument("--out-dir", dest="out_dir")
        parser.add_argument("--epochs", type=int)
        parser.add_argument("--dim", type=int)
        parser.add_argument("--layers", dest="n_layers", type=int)
        parser.add_argument("--learning-rate", dest="learning_rate", type=float)
        parser.add_argument("--batch-size", dest="batch_size", type=int)
        parser.add_argument("--cl-weight", dest="cl_weight", type=float)
        parser.add_argument("--temperature", type=float)
        parser.add_argument("--pooling", choices=["mean", "last"])
        parser.add_argument("--seed", type=int)

    def run(self, options):
        mode = options["mode"]
        augmented_path = None
        if mode == MODE_VOTEGCL:
            augmented_path = self.resolve_path(options, "augmented", required=False)
            if augmented_path is None:
                raise usage_error("--mode votegcl requires --augmented (augmented edges TSV)")

        config = self.run_config.train_config(
            **{
                key: options.get(key)
                for key in (
                    "epochs",
                    "dim",
                    "n_layers",
                    "learning_rate",
                    "batch_size",
                    "cl_weight",
                    "temperature",
                    "pooling",
                    "seed",
                )
            }
        )
        split_dir = self.resolve_path(options, "split_dir")
        out_dir = self.out_dir(options)

        split = load_split(split_dir)
        graph = build_graph(split.train)
        metrics_path = out_dir / METRICS_FILE

        if mode == MODE_VOTEGCL:
            new_edges = read_augmented_edges(augmented_path, split.ids)
            aug_graph = merge_augmented(graph, new_edges)
            embeddings = train_votegcl(graph, aug_graph, config, metrics_path=metrics_path)
        else:
            embeddings = train_vanilla(graph, config, metrics_path=metrics_path)

        embeddings_path = out_dir / EMBEDDINGS_FILE
        save_embeddings(embeddings, embeddings_path)

        self.emit(
            {
                "mode": mode,
                "embeddings": embeddings_path,
                "metrics": metrics_path,
                "epochs": config.epochs,
                "seed": config.seed,
            }
        )
