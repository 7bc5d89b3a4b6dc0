"""
Majority-vote augmentation of low-degree users.

Usage:
    python manage.py augment --split-dir runs/ --embeddings runs/vanilla/embeddings.vgcl \
        --out-dir runs/aug --config run.json
    python manage.py augment ... --theta 1.0 --oracle validation   # simulator oracle
    python manage.py augment ... --queue                           # hand off to Celery
"""

import copy

from augmentation.serializers import AugmentationConfigSerializer
from augmentation.services import run_augmentation_job
from augmentation.tasks import run_augmentation_task

from ..base import ExperimentCommand, usage_error

FLAG_FIELDS = {
    "quantile": "quantile",
    "candidates": "n_candidates",
    "votes": "n_votes",
    "edges_per_user": "edges_per_user",
    "parallelism": "parallelism",
    "seed": "seed",
    "prompt_mode": "prompt_mode",
}


class Command(ExperimentCommand):
    help = "Synthesize edges for low-degree users from N reranking votes"

    def add_command_arguments(self, parser):
        parser.add_argument("--split-dir", dest="split_dir")
        parser.add_argument("--embeddings", help="Retrieval embeddings (vanilla run)")
        parser.add_argument("--catalog", dest="metadata", help="Item metadata TSV")
        parser.add_argument("--out-dir", dest="out_dir")
        parser.add_argument("--quantile", type=float)
        parser.add_argument("--candidates", type=int)
        parser.add_argument("--votes", type=int)
        parser.add_argument("--edges-per-user", dest="edges_per_user", type=int)
        parser.add_argument("--parallelism", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--prompt-mode", dest="prompt_mode", choices=["zero_shot", "few_shot"])
        parser.add_argument(
            "--no-reasoning",
            dest="include_reasoning",
            action="store_false",
            default=None,
            help="Ask for the ordering only (no think/reasoning sections)",
        )
        parser.add_argument("--theta", type=float, help="Use the Mallows simulator backend")
        parser.add_argument("--oracle", choices=["validation", "test"])
        parser.add_argument("--queue", action="store_true", help="Run on a Celery worker")

    def augmentation_section(self, options):
        """Config section with flags merged in (flags win)."""
        section = copy.deepcopy(self.run_config.section_data("augmentation"))
        for flag, field in FLAG_FIELDS.items():
            if options.get(flag) is not None:
                section[field] = options[flag]
        if options.get("include_reasoning") is not None:
            section["include_reasoning"] = options["include_reasoning"]

        if options.get("theta") is not None:
            backend = section.get("backend") or {}
            if "remote_llm" in backend:
                raise usage_error("--theta selects the simulator but the config names remote_llm")
            simulator = dict(backend.get("simulator") or {})
            simulator["theta"] = options["theta"]
            section["backend"] = {"simulator": simulator}

        if not section.get("backend"):
            raise usage_error(
                "augment needs a backend: set augmentation.backend in --config or pass --theta"
            )
        return section

    def run(self, options):
        section = self.augmentation_section(options)
        serializer = AugmentationConfigSerializer(data=section)
        serializer.is_valid(raise_exception=True)

        oracle = options.get("oracle") or serializer.oracle
        if oracle and "simulator" not in section["backend"]:
            raise usage_error("--oracle needs the simulator backend")

        split_dir = self.resolve_path(options, "split_dir")
        embeddings_path = self.resolve_path(options, "embeddings")
        catalog_path = self.resolve_path(options, "metadata", required=False)
        out_dir = self.out_dir(options)

        if options["queue"]:
            result = run_augmentation_task.delay(
                str(split_dir),
                str(embeddings_path),
                str(out_dir),
                section,
                catalog_path=str(catalog_path) if catalog_path else None,
                oracle=oracle,
            )
            self.emit({"queued": True, "task_id": result.id})
            return

        summary = run_augmentation_job(
            split_dir,
            embeddings_path,
            out_dir,
            serializer.to_config(),
            catalog_path=catalog_path,
            oracle=oracle,
        )
        self.emit(summary)
