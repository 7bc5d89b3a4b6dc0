"""
Run config serializers

One JSON document drives every subcommand:

    {
      "seed": 2024,
      "paths": {"interactions": "...", "metadata": "...", "out_dir": "runs/"},
      "train": {"epochs": 100, "cl_weight": 0.05},
      "augmentation": {"n_votes": 8, "backend": {"simulator": {"theta": 1.0}}},
      "evaluation": {"cutoffs": [10, 20], "target": "test"}
    }

Every section is optional; command-line flags override config values.
"""

import json
from pathlib import Path

from rest_framework import serializers
from rest_framework.settings import api_settings

from augmentation.serializers import AugmentationConfigSerializer
from evaluation.metrics import DEFAULT_HEAD_FRACTION
from evaluation.services import DEFAULT_CUTOFFS, EVAL_TARGETS
from training.serializers import TrainConfigSerializer


class RunConfigError(Exception):
    """Raised when a run config cannot be read or violates its schema"""

    def __init__(self, message, errors=None):
        self.errors = errors or []
        super().__init__(message)


def flatten_errors(detail, prefix=""):
    """
    DRF error detail -> ["train.learning_rate: Ensure this value ...", ...]

    non_field_errors attach to the enclosing section.
    """
    lines = []
    if isinstance(detail, dict):
        for key, value in detail.items():
            if key == api_settings.NON_FIELD_ERRORS_KEY:
                lines.extend(flatten_errors(value, prefix))
            else:
                lines.extend(flatten_errors(value, f"{prefix}.{key}" if prefix else str(key)))
    elif isinstance(detail, list):
        for index, value in enumerate(detail):
            if isinstance(value, (dict, list)):
                lines.extend(flatten_errors(value, f"{prefix}.{index}" if prefix else str(index)))
            else:
                lines.extend(flatten_errors(value, prefix))
    else:
        lines.append(f"{prefix}: {detail}" if prefix else str(detail))
    return lines


class PathsSerializer(serializers.Serializer):
    interactions = serializers.CharField(required=False)
    metadata = serializers.CharField(required=False)
    out_dir = serializers.CharField(required=False)
    split_dir = serializers.CharField(required=False)
    embeddings = serializers.CharField(required=False)
    augmented = serializers.CharField(required=False)


class EvaluationSectionSerializer(serializers.Serializer):
    cutoffs = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        required=False,
        allow_empty=False,
        default=list(DEFAULT_CUTOFFS),
    )
    target = serializers.ChoiceField(choices=list(EVAL_TARGETS), required=False, default="test")
    head_fraction = serializers.FloatField(required=False, default=DEFAULT_HEAD_FRACTION)

    def validate_head_fraction(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError("Ensure this value is in (0, 1].")
        return value


class RunConfigSerializer(serializers.Serializer):
    seed = serializers.IntegerField(min_value=0, required=False)
    paths = PathsSerializer(required=False)
    train = TrainConfigSerializer(required=False)
    augmentation = AugmentationConfigSerializer(required=False)
    evaluation = EvaluationSectionSerializer(required=False)

    def section(self, name):
        return dict(self.validated_data.get(name) or {})

    def path(self, key):
        return self.section("paths").get(key)

    def section_data(self, name):
        """Raw JSON of a section, with the top-level seed filled in."""
        raw = dict((self.initial_data or {}).get(name) or {})
        if "seed" in self.validated_data and name in ("train", "augmentation"):
            raw.setdefault("seed", self.validated_data["seed"])
        return raw

    def train_config(self, **overrides):
        serializer = TrainConfigSerializer(data=self.section_data("train"))
        serializer.is_valid(raise_exception=True)
        return serializer.to_config(**overrides)

    def evaluation_options(self):
        serializer = EvaluationSectionSerializer(data=self.section_data("evaluation"))
        serializer.is_valid(raise_exception=True)
        return dict(serializer.validated_data)


def validate_run_config(data) -> RunConfigSerializer:
    """
    Raises:
        RunConfigError: schema violation; one "dotted.path: message" line per error
    """
    if not isinstance(data, dict):
        raise RunConfigError("Run config must be a JSON object")
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        errors = flatten_errors(serializer.errors)
        raise RunConfigError("Invalid run config: " + "; ".join(errors), errors=errors)
    return serializer


def load_run_config(path=None) -> RunConfigSerializer:
    """Read and validate a JSON run config; no path means an empty config."""
    if path is None:
        return validate_run_config({})
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise RunConfigError(f"Run config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise RunConfigError(f"Run config {path} is not valid JSON: {exc}") from None
    return validate_run_config(data)
