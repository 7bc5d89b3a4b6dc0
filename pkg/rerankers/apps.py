from django.apps import AppConfig


class RerankersConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "rerankers"
