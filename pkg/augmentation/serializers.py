"""
Augmentation config serializers (JSON run config -> AugmentationConfig)
"""

from rest_framework import serializers

from rerankers.models import MAX_CANDIDATES, PROMPT_MODES
from rerankers.serializers import RerankBackendSerializer, backend_from_data

from .models import AugmentationConfig


class AugmentationConfigSerializer(serializers.Serializer):
    """
    Validates the "augmentation" section of a run config, with its nested
    "backend". Omitted keys fall back to the AugmentationConfig defaults.
    """

    quantile = serializers.FloatField(required=False)
    n_candidates = serializers.IntegerField(min_value=2, max_value=MAX_CANDIDATES, required=False)
    n_votes = serializers.IntegerField(min_value=1, required=False)
    edges_per_user = serializers.IntegerField(min_value=1, required=False)
    parallelism = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    prompt_mode = serializers.ChoiceField(choices=list(PROMPT_MODES), required=False)
    include_reasoning = serializers.BooleanField(required=False)
    similar_user_pool = serializers.IntegerField(min_value=1, required=False)
    fewshot_items = serializers.IntegerField(min_value=1, required=False)
    backend = RerankBackendSerializer(required=False)

    def validate_quantile(self, value):
        if not 0.0 < value <= 1.0:
            raise serializers.ValidationError("Ensure this value is in (0, 1].")
        return value

    def validate(self, attrs):
        n_candidates = attrs.get("n_candidates", AugmentationConfig.n_candidates)
        edges_per_user = attrs.get("edges_per_user", AugmentationConfig.edges_per_user)
        if edges_per_user > n_candidates:
            raise serializers.ValidationError(
                {"edges_per_user": f"Ensure this value is at most n_candidates ({n_candidates})."}
            )
        return attrs

    @property
    def oracle(self):
        backend = self.validated_data.get("backend")
        simulator = backend.get("simulator") if backend else None
        return simulator.get("oracle") if simulator else None

    def to_config(self, preferences=None, **overrides) -> AugmentationConfig:
        """
        Build an AugmentationConfig; non-None overrides (CLI flags) win.

        `preferences` feed a simulator backend (oracle runs).
        """
        values = dict(self.validated_data)
        backend = values.pop("backend", None)
        if backend is not None:
            values["backend"] = backend_from_data(backend, preferences=preferences)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return AugmentationConfig(**values)
