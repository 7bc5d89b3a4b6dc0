"""
Django settings for the votegcl project.

The project has no web surface and no database: Django provides the app
registry, management commands, the cache framework and logging configuration
for the experiment pipeline.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config(
    "SECRET_KEY",
    default="votegcl-insecure-experiments-only-key",
)

DEBUG = config("DEBUG", default=True, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Third-party apps
    "rest_framework",
    # Local apps
    "interactions.apps.InteractionsConfig",
    "graphs.apps.GraphsConfig",
    "embeddings.apps.EmbeddingsConfig",
    "training.apps.TrainingConfig",
    "ensembles.apps.EnsemblesConfig",
    "rerankers.apps.RerankersConfig",
    "augmentation.apps.AugmentationConfig",
    "evaluation.apps.EvaluationConfig",
    "experiments.apps.ExperimentsConfig",
]

# Implicit-feedback artifacts live in flat files (TSV / binary); no database.
DATABASES = {}

USE_TZ = True
TIME_ZONE = "UTC"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# ==============================================================================
# VOTEGCL EXPERIMENT SETTINGS
# ==============================================================================

# Default seed used when neither the run config nor a flag provides one
VGCL_DEFAULT_SEED = config("VGCL_DEFAULT_SEED", default=2024, cast=int)

# Bearer token for the remote reranker (never stored in run configs)
VGCL_API_KEY = config("VGCL_API_KEY", default="")

# Noun used in reranking prompts ("movie", "book", "business", ...)
VGCL_ITEM_NOUN = config("VGCL_ITEM_NOUN", default="movie")

# Remote reranker defaults
VGCL_REMOTE_TIMEOUT = config("VGCL_REMOTE_TIMEOUT", default=60, cast=int)
VGCL_REMOTE_MAX_RETRIES = config("VGCL_REMOTE_MAX_RETRIES", default=3, cast=int)

# Cached rerank responses expire after a week
VGCL_RERANK_CACHE_TIMEOUT = config(
    "VGCL_RERANK_CACHE_TIMEOUT", default=7 * 24 * 3600, cast=int
)


# ==============================================================================
# CACHING CONFIGURATION (rerank responses)
# ==============================================================================

REDIS_URL = config("REDIS_URL", default="")

if REDIS_URL:
    CACHES = {
        "default": {
            "BACKEND": "django_redis.cache.RedisCache",
            "LOCATION": REDIS_URL,
            "OPTIONS": {
                "CLIENT_CLASS": "django_redis.client.DefaultClient",
                "SOCKET_CONNECT_TIMEOUT": 5,
                "SOCKET_TIMEOUT": 5,
                "RETRY_ON_TIMEOUT": True,
                "MAX_CONNECTIONS": 50,
            },
            "KEY_PREFIX": "votegcl",
        }
    }
else:
    # In-memory cache for local runs and tests (no Redis required)
    CACHES = {
        "default": {
            "BACKEND": "django.core.cache.backends.locmem.LocMemCache",
            "LOCATION": "votegcl",
        }
    }


# ==============================================================================
# CELERY CONFIGURATION (queued augmentation runs)
# ==============================================================================

CELERY_BROKER_URL = REDIS_URL or "redis://localhost:6379/0"
CELERY_RESULT_BACKEND = REDIS_URL or "redis://localhost:6379/0"
CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"
CELERY_TIMEZONE = "UTC"
CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 6 * 60 * 60  # 6 hours (LLM augmentation is slow)
CELERY_TASK_ALWAYS_EAGER = config("CELERY_TASK_ALWAYS_EAGER", default=False, cast=bool)
CELERY_BROKER_CONNECTION_RETRY_ON_STARTUP = True


# ==============================================================================
# LOGGING CONFIGURATION
# ==============================================================================

LOG_LEVEL = config("VGCL_LOG_LEVEL", default="INFO")
LOGS_DIR = Path(config("VGCL_LOG_DIR", default=str(BASE_DIR / "logs")))

# File logging only when the logs directory already exists
USE_FILE_LOGGING = LOGS_DIR.exists() and LOGS_DIR.is_dir()

LOCAL_APPS = [
    "interactions",
    "graphs",
    "embeddings",
    "training",
    "ensembles",
    "rerankers",
    "augmentation",
    "evaluation",
    "experiments",
]

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {module} {process:d} {thread:d} {message}",
            "style": "{",
        },
        "simple": {
            "format": "{levelname} {asctime} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "level": LOG_LEVEL,
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
        **{
            app: {
                "handlers": ["console"],
                "level": LOG_LEVEL,
                "propagate": False,
            }
            for app in LOCAL_APPS
        },
    },
}

if USE_FILE_LOGGING:
    LOGGING["handlers"].update(
        {
            "file": {
                "level": "INFO",
                "class": "logging.FileHandler",
                "filename": LOGS_DIR / "votegcl.log",
                "formatter": "verbose",
            },
            "augmentation_file": {
                "level": "INFO",
                "class": "logging.FileHandler",
                "filename": LOGS_DIR / "augmentation.log",
                "formatter": "verbose",
            },
        }
    )
    for app in LOCAL_APPS:
        LOGGING["loggers"][app]["handlers"] = ["console", "file"]
    LOGGING["loggers"]["augmentation"]["handlers"] = [
        "console",
        "file",
        "augmentation_file",
    ]
    LOGGING["loggers"]["rerankers"]["handlers"] = [
        "console",
        "file",
        "augmentation_file",
    ]


# ==============================================================================
# SENTRY ERROR MONITORING CONFIGURATION
# ==============================================================================

SENTRY_DSN = config("SENTRY_DSN", default="")

# Only initialize Sentry if DSN is provided
if SENTRY_DSN:
    import sentry_sdk
    from sentry_sdk.integrations.celery import CeleryIntegration
    from sentry_sdk.integrations.django import DjangoIntegration

    sentry_sdk.init(
        dsn=SENTRY_DSN,
        integrations=[DjangoIntegration(), CeleryIntegration()],
        traces_sample_rate=0.0,
        environment="development" if DEBUG else "production",
        release="votegcl@1.0.0",
        send_default_pii=False,
        include_source_context=False,
        attach_stacktrace=False,
    )
