"""
Training config serializers (JSON run config -> TrainConfig)
"""

from rest_framework import serializers

from .models import TrainConfig


class TrainConfigSerializer(serializers.Serializer):
    """
    Validates the "train" section of a run config.
    Omitted keys fall back to the TrainConfig defaults.
    """

    dim = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(required=False)
    epochs = serializers.IntegerField(min_value=0, required=False)
    n_layers = serializers.IntegerField(min_value=0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    cl_weight = serializers.FloatField(required=False)
    temperature = serializers.FloatField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    pooling = serializers.ChoiceField(
        choices=["mean", "last"], required=False, allow_null=True
    )

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is greater than 0.")
        return value

    def validate_cl_weight(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("Ensure this value is between 0 and 1 (exclusive).")
        return value

    def validate_temperature(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is greater than 0.")
        return value

    def to_config(self, **overrides) -> TrainConfig:
        """Build a TrainConfig; non-None overrides (CLI flags) win."""
        values = dict(self.validated_data)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig(**values)
