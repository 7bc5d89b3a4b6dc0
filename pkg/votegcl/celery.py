"""
Celery configuration for votegcl
Handles queued augmentation runs (slow remote reranking)
"""

import os
from celery import Celery

# Set default Django settings module
os.environ.setdefault("DJANGO_SETTINGS_MODULE", "votegcl.settings")

# Create Celery app
app = Celery("votegcl")

# Load config from Django settings with CELERY_ prefix
app.config_from_object("django.conf:settings", namespace="CELERY")

# Auto-discover tasks from all installed apps
app.autodiscover_tasks()
