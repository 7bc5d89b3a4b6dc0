"""
Reranker backend serializers

A backend config names exactly one kind:
    {"simulator": {"theta": 1.0}}
    {"remote_llm": {"endpoint": "...", "model_name": "...", "temperature": 1.0}}
"""

from decouple import config
from django.conf import settings
from rest_framework import serializers

from .models import DEFAULT_RESPONSE_PATH, RemoteLLMBackend, SimulatorBackend


class SimulatorBackendSerializer(serializers.Serializer):
    theta = serializers.FloatField(min_value=0.0, required=False, default=1.0)
    # Preferences are derived at run time from a split (information-leak oracle)
    oracle = serializers.ChoiceField(
        choices=["validation", "test"], required=False, allow_null=True, default=None
    )


class RemoteLLMBackendSerializer(serializers.Serializer):
    endpoint = serializers.URLField()
    model_name = serializers.CharField(max_length=200)
    temperature = serializers.FloatField(min_value=0.0, required=False, default=1.0)
    timeout = serializers.FloatField(required=False)
    max_retries = serializers.IntegerField(min_value=0, required=False)
    response_path = serializers.ListField(
        child=serializers.JSONField(), required=False, allow_empty=False
    )
    use_cache = serializers.BooleanField(required=False, default=True)
    # Name of the environment variable holding the key (default VGCL_API_KEY)
    api_key_env = serializers.CharField(max_length=100, required=False)

    def validate_timeout(self, value):
        if value <= 0:
            raise serializers.ValidationError("Ensure this value is greater than 0.")
        return value

    def validate_response_path(self, value):
        for key in value:
            if not isinstance(key, (str, int)) or isinstance(key, bool):
                raise serializers.ValidationError("Path entries must be strings or integers.")
        return value


class RerankBackendSerializer(serializers.Serializer):
    simulator = SimulatorBackendSerializer(required=False)
    remote_llm = RemoteLLMBackendSerializer(required=False)

    def validate(self, attrs):
        """Exactly one backend kind"""
        kinds = [kind for kind in ("simulator", "remote_llm") if attrs.get(kind) is not None]
        if len(kinds) != 1:
            raise serializers.ValidationError(
                "Configure exactly one backend: 'simulator' or 'remote_llm'."
            )
        return attrs

    @property
    def oracle(self):
        simulator = self.validated_data.get("simulator")
        return simulator.get("oracle") if simulator else None

    def to_backend(self, preferences=None):
        """Build the backend; simulator preferences are supplied by the caller."""
        return backend_from_data(self.validated_data, preferences=preferences)


def backend_from_data(data, preferences=None):
    """Backend from validated RerankBackendSerializer data."""
    if data.get("simulator") is not None:
        return SimulatorBackend(theta=data["simulator"]["theta"], preferences=preferences or {})

    remote = data["remote_llm"]
    return RemoteLLMBackend(
        endpoint=remote["endpoint"],
        model_name=remote["model_name"],
        temperature=remote["temperature"],
        timeout=remote.get("timeout", settings.VGCL_REMOTE_TIMEOUT),
        max_retries=remote.get("max_retries", settings.VGCL_REMOTE_MAX_RETRIES),
        response_path=tuple(remote.get("response_path", DEFAULT_RESPONSE_PATH)),
        api_key=config(remote["api_key_env"], default="") if remote.get("api_key_env") else None,
        use_cache=remote["use_cache"],
    )
