"""
Shared plumbing for the experiment commands: run config loading, path
resolution (flags win over config) and domain-error translation.
"""

import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework.exceptions import ValidationError

from augmentation.models import AugmentationError
from embeddings.models import EmbeddingError
from ensembles.models import EnsembleError
from evaluation.models import EvaluationError
from graphs.models import GraphError
from interactions.models import DataIOError
from rerankers.models import RerankError
from training.models import TrainingError

from ..serializers import RunConfigError, flatten_errors, load_run_config

logger = logging.getLogger(__name__)

USAGE_ERROR = 2

DOMAIN_ERRORS = (
    DataIOError,
    GraphError,
    EmbeddingError,
    TrainingError,
    EnsembleError,
    RerankError,
    AugmentationError,
    EvaluationError,
    OSError,
)


def usage_error(message) -> CommandError:
    return CommandError(message, returncode=USAGE_ERROR)


def parse_csv(value, cast):
    """'1,2,4' -> [1, 2, 4] for list-valued flags."""
    try:
        return [cast(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise usage_error(f"Expected a comma-separated list, got {value!r}") from None


class ExperimentCommand(BaseCommand):
    """
    Base for the experiment subcommands.

    Subclasses implement add_command_arguments() and run(options); domain
    errors exit with 1, config and usage errors with 2.
    """

    def add_arguments(self, parser):
        parser.add_argument("--config", help="JSON run config")
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            self.run_config = load_run_config(options.get("config"))
            return self.run(options)
        except RunConfigError as exc:
            raise usage_error(str(exc)) from exc
        except ValidationError as exc:
            raise usage_error("Invalid run config: " + "; ".join(flatten_errors(exc.detail))) from exc
        except DOMAIN_ERRORS as exc:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {exc}")
            raise CommandError(str(exc)) from exc

    def run(self, options):
        raise NotImplementedError("subclasses of ExperimentCommand must provide a run() method")

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def resolve_path(self, options, flag, config_key=None, required=True, must_exist=True):
        """Flag value, else paths.<config_key> from the run config."""
        value = options.get(flag) or self.run_config.path(config_key or flag)
        if value is None:
            if required:
                raise usage_error(f"--{flag.replace('_', '-')} is required (or paths.{config_key or flag})")
            return None
        path = Path(value)
        if must_exist and not path.exists():
            raise usage_error(f"{flag.replace('_', '-')}: {path} does not exist")
        return path

    def out_dir(self, options) -> Path:
        out_dir = self.resolve_path(options, "out_dir", must_exist=False)
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir

    def emit(self, summary):
        self.stdout.write(json.dumps(summary, indent=2, default=str))
