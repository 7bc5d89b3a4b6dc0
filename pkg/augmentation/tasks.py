"""
Celery tasks for queued augmentation runs
"""

from celery import shared_task
from celery.utils.log import get_task_logger

logger = get_task_logger(__name__)


@shared_task(bind=True)
def run_augmentation_task(
    self,
    split_dir,
    embeddings_path,
    out_dir,
    augmentation_config,
    catalog_path=None,
    oracle=None,
):
    """
    Async augmentation run (per-user reranker failures land in the skip report)

    Args:
        split_dir: Directory holding the split artifacts
        embeddings_path: Retrieval embeddings (VGCL binary)
        out_dir: Where the edges TSV and skip report are written
        augmentation_config: The "augmentation" section of a run config
            (plain JSON; re-validated here)
        catalog_path: Optional item metadata TSV
        oracle: Optional held-out split ("validation" / "test") for the
            simulator backend

    Returns:
        dict: run summary (paths and counts)
    """
    from .serializers import AugmentationConfigSerializer
    from .services import run_augmentation_job

    serializer = AugmentationConfigSerializer(data=augmentation_config)
    serializer.is_valid(raise_exception=True)
    cfg = serializer.to_config()

    try:
        summary = run_augmentation_job(
            split_dir,
            embeddings_path,
            out_dir,
            cfg,
            catalog_path=catalog_path,
            oracle=oracle,
        )
        logger.info(
            f"Augmentation task {self.request.id} finished: "
            f"{summary['n_edges']} edges, {summary['n_skipped']} skipped"
        )
        return summary

    except Exception as exc:
        logger.error(f"Augmentation task {self.request.id} failed: {str(exc)}")
        raise
