"""
Leave-one-out split of an interactions TSV.

Usage:
    python manage.py split --input ml100k.tsv --out-dir runs/
"""

from interactions.loaders import load_interactions
from interactions.persistence import save_split
from interactions.splits import leave_one_out_split

from ..base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Split interactions into train / validation / test artifacts"

    def add_command_arguments(self, parser):
        parser.add_argument("--input", dest="interactions", help="Interactions TSV")
        parser.add_argument("--out-dir", dest="out_dir", help="Output directory")

    def run(self, options):
        source = self.resolve_path(options, "interactions")
        out_dir = self.out_dir(options)

        log = load_interactions(source)
        split = leave_one_out_split(log)
        written = save_split(split, out_dir)

        self.emit(
            {
                "train": written["train"],
                "validation": written["validation"],
                "test": written["test"],
                "n_train": len(split.train),
                "n_eval_users": len(split.eval_users),
            }
        )
