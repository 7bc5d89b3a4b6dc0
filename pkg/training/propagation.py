"""
Differentiable LightGCN propagation for the trainer.

Mirrors embeddings.services.propagate/pool on torch tensors so gradients
reach E(0) through Ã^l by autograd.
"""

from typing import List

import numpy as np
import torch

from embeddings.services import POOLING_LAST, POOLING_MEAN
from graphs.models import NormalizedAdjacency

from .models import TrainingError


def sparse_tensor(adjacency: NormalizedAdjacency) -> torch.Tensor:
    """Coalesced float64 COO tensor of Ã."""
    coo = adjacency.matrix.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.from_numpy(coo.data.astype(np.float64))
    return torch.sparse_coo_tensor(indices, values, coo.shape, dtype=torch.float64).coalesce()


def propagate_layers(E0: torch.Tensor, adj: torch.Tensor, n_layers: int) -> List[torch.Tensor]:
    """[E(0), Ã E(0), ..., Ã^L E(0)]"""
    layers = [E0]
    for _ in range(n_layers):
        layers.append(torch.sparse.mm(adj, layers[-1]))
    return layers


def pool_layers(layers: List[torch.Tensor], mode: str) -> torch.Tensor:
    if mode == POOLING_MEAN:
        return torch.stack(layers, dim=0).mean(dim=0)
    if mode == POOLING_LAST:
        return layers[-1]
    raise TrainingError(f"Unknown pooling mode: {mode!r}")
