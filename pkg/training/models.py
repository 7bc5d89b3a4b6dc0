"""
Training configuration and mini-batch models.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings


class TrainingError(Exception):
    """Base class for trainer failures"""

    pass


class TrainingConfigError(TrainingError):
    """Raised when a TrainConfig violates its invariants"""

    pass


class SamplingError(TrainingError):
    """Raised when no valid (u, i, j) triple can be drawn"""

    pass


class DegenerateEmbeddingError(TrainingError):
    """Raised when a contrastive batch node has a zero-norm embedding"""

    pass


class TrainingDivergedError(TrainingError):
    """Raised when the training loss becomes non-finite"""

    pass


@dataclass
class TrainConfig:
    """
    Optimizer and objective settings.

    pooling=None selects the mode default: mean pooling for vanilla
    LightGCN, last layer of the augmented stack for VoteGCL.
    """

    dim: int = 256
    learning_rate: float = 1e-3
    epochs: int = 100
    n_layers: int = 2
    batch_size: int = 2048
    cl_weight: float = 0.05
    temperature: float = 0.2
    seed: int = field(default_factory=lambda: settings.VGCL_DEFAULT_SEED)
    pooling: Optional[str] = None

    def __post_init__(self):
        if self.dim < 1:
            raise TrainingConfigError(f"dim must be >= 1, got {self.dim}")
        if not self.learning_rate > 0:
            raise TrainingConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise TrainingConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.n_layers < 0:
            raise TrainingConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.batch_size < 1:
            raise TrainingConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.cl_weight < 1.0:
            raise TrainingConfigError(f"cl_weight must be in (0, 1), got {self.cl_weight}")
        if not self.temperature > 0:
            raise TrainingConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.pooling not in (None, "mean", "last"):
            raise TrainingConfigError(f"Unknown pooling mode: {self.pooling!r}")


@dataclass
class TripleBatch:
    """
    BPR triples (u, i_pos, j_neg) as parallel index arrays.

    Item indices are item-space indices; node_set maps them into the
    global node layout (users first, then items).
    """

    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray
    n_users: int = 0

    def __len__(self):
        return len(self.users)

    @property
    def triples(self) -> List[Tuple[int, int, int]]:
        return list(
            zip(self.users.tolist(), self.pos_items.tolist(), self.neg_items.tolist())
        )

    @property
    def node_set(self) -> np.ndarray:
        """Distinct users and items of the batch as sorted global node indices."""
        items = np.concatenate([self.pos_items, self.neg_items])
        return np.concatenate(
            [np.unique(self.users), np.unique(items) + self.n_users]
        ).astype(np.int64)


@dataclass
class EpochMetrics:
    epoch: int
    bpr_loss: float
    cl_loss: float
    total: float

    def to_dict(self):
        return {
            "epoch": self.epoch,
            "bpr_loss": self.bpr_loss,
            "cl_loss": self.cl_loss,
            "total": self.total,
        }


@dataclass
class TrainingHistory:
    epochs: List[EpochMetrics] = field(default_factory=list)

    def totals(self) -> List[float]:
        return [m.total for m in self.epochs]
