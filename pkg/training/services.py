"""
Training Service Layer

- train_vanilla: LightGCN under BPR, mean-pooled output
- train_votegcl: shared E(0) encoded on G_aug and G, BPR + λ InfoNCE,
  last layer of the augmented stack as output

Every batch re-propagates E(0) as a torch graph; autograd carries the
gradient back through Ã^l and torch.optim.Adam updates E(0).
"""

import json
import logging
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from embeddings.models import EmbeddingMatrix
from embeddings.services import (
    POOLING_LAST,
    POOLING_MEAN,
    init_embeddings,
    pool,
    propagate,
)
from graphs.models import AugmentedGraph, InteractionGraph
from graphs.services import normalized_adjacency

from .losses import as_tensor, bpr_objective, info_nce_objective, total_loss
from .models import (
    EpochMetrics,
    TrainConfig,
    TrainingDivergedError,
    TrainingError,
    TrainingHistory,
)
from .propagation import pool_layers, propagate_layers, sparse_tensor
from .sampling import sample_batch

logger = logging.getLogger(__name__)

MODE_VANILLA = "vanilla"
MODE_VOTEGCL = "votegcl"

# Sampler stream is derived from the run seed, separate from initialization
SAMPLER_STREAM = 1

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class Trainer:
    """
    Mini-batch Adam trainer over a single shared E(0).

    For VoteGCL pass `aug_graph`; without it the trainer runs vanilla
    LightGCN.
    """

    def __init__(
        self,
        graph: InteractionGraph,
        config: TrainConfig,
        aug_graph: Optional[Union[AugmentedGraph, InteractionGraph]] = None,
        metrics_path: Optional[Union[str, Path]] = None,
    ):
        self.graph = graph
        self.config = config
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.history = TrainingHistory()

        self.adjacency = normalized_adjacency(graph)
        self.adj = sparse_tensor(self.adjacency)
        self.aug_adjacency = None
        self.aug_adj = None
        self.sample_graph = graph
        if aug_graph is not None:
            self._attach_augmented(aug_graph)

        self.mode = MODE_VOTEGCL if self.aug_adjacency is not None else MODE_VANILLA
        default_pooling = POOLING_LAST if self.mode == MODE_VOTEGCL else POOLING_MEAN
        self.pooling = config.pooling or default_pooling

    def _attach_augmented(self, aug_graph):
        if isinstance(aug_graph, AugmentedGraph):
            merged = aug_graph.graph
            adjacency = aug_graph.adjacency or normalized_adjacency(merged)
        else:
            merged = aug_graph
            adjacency = normalized_adjacency(merged)

        if (merged.n_users, merged.n_items) != (self.graph.n_users, self.graph.n_items):
            raise TrainingError("Augmented graph must share the observed node layout")
        if not self.graph.edges <= merged.edges:
            raise TrainingError("Augmented graph must contain every observed edge")

        self.aug_adjacency = adjacency
        self.aug_adj = sparse_tensor(adjacency)
        # BPR positives come from E+ so augmented edges are trained on
        self.sample_graph = merged
        self.contrastive_mask = self._connected_in_both(self.graph, merged)

    def _connected_in_both(self, observed, merged):
        """
        Nodes with at least one edge in both views. Isolated nodes have zero
        rows in every layer l >= 1 and cannot be L2-normalized.
        """
        if self.config.n_layers == 0:
            return np.ones(observed.n_nodes, dtype=bool)
        observed_degree = np.concatenate([observed.degree_u, observed.degree_i])
        merged_degree = np.concatenate([merged.degree_u, merged.degree_i])
        return (observed_degree > 0) & (merged_degree > 0)

    # ------------------------------------------------------------------
    # one step
    # ------------------------------------------------------------------

    def objective(self, E0: torch.Tensor, batch):
        """(bpr, cl, total) tensors for one batch at E(0)."""
        cfg = self.config
        zero = torch.zeros((), dtype=E0.dtype)

        if self.mode == MODE_VANILLA:
            layers = propagate_layers(E0, self.adj, cfg.n_layers)
            bpr = bpr_objective(pool_layers(layers, self.pooling), batch)
            return bpr, zero, bpr

        aug_layers = propagate_layers(E0, self.aug_adj, cfg.n_layers)
        bpr = bpr_objective(pool_layers(aug_layers, self.pooling), batch)

        nodes = batch.node_set
        nodes = nodes[self.contrastive_mask[nodes]]
        if len(nodes) == 0:
            return bpr, zero, bpr
        org_layers = propagate_layers(E0, self.adj, cfg.n_layers)
        cl = info_nce_objective(aug_layers[-1], org_layers[-1], nodes, cfg.temperature)
        return bpr, cl, total_loss(bpr, cl, cfg.cl_weight)

    def view_gap(self, params) -> float:
        """Mean 1 - cos(z_i, z_i,org) over nodes connected in both views."""
        if self.mode != MODE_VOTEGCL:
            raise TrainingError("view_gap needs an augmented view")
        E0 = as_tensor(params)
        with torch.no_grad():
            aug = propagate_layers(E0, self.aug_adj, self.config.n_layers)[-1]
            org = propagate_layers(E0, self.adj, self.config.n_layers)[-1]
            mask = torch.from_numpy(self.contrastive_mask)
            cos = torch.nn.functional.cosine_similarity(aug[mask], org[mask], dim=1)
        return float((1.0 - cos).mean())

    def _step(self, params, batch):
        """Returns (bpr, cl, total, grad) for one batch at `params` (a copy is differentiated)."""
        E0 = as_tensor(params, requires_grad=True)
        bpr, cl, total = self.objective(E0, batch)
        total.backward()
        return float(bpr), float(cl), float(total), E0.grad.numpy()

    # ------------------------------------------------------------------
    # full run
    # ------------------------------------------------------------------

    def batches_per_epoch(self) -> int:
        return max(1, math.ceil(self.sample_graph.n_edges / self.config.batch_size))

    def build_optimizer(self, params: torch.Tensor) -> torch.optim.Adam:
        return torch.optim.Adam(
            [params], lr=self.config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS
        )

    def fit(self) -> EmbeddingMatrix:
        cfg = self.config
        E0 = init_embeddings(
            self.graph.n_nodes, cfg.dim, cfg.seed, n_users=self.graph.n_users
        )
        params = torch.nn.Parameter(as_tensor(E0))
        optimizer = self.build_optimizer(params)
        rng = np.random.default_rng([cfg.seed, SAMPLER_STREAM])

        logger.info(
            f"Training {self.mode} (pooling={self.pooling}): {cfg.epochs} epochs x "
            f"{self.batches_per_epoch()} batches, d={cfg.dim}, L={cfg.n_layers}"
        )

        metrics_handle = None
        if self.metrics_path is not None:
            self.metrics_path.parent.mkdir(parents=True, exist_ok=True)
            metrics_handle = self.metrics_path.open("w", encoding="utf-8")

        try:
            for epoch in range(1, cfg.epochs + 1):
                epoch_bpr = epoch_cl = epoch_total = 0.0
                for _ in range(self.batches_per_epoch()):
                    batch = sample_batch(self.sample_graph, cfg.batch_size, rng)
                    optimizer.zero_grad()
                    bpr, cl, total = self.objective(params, batch)
                    total.backward()
                    if not torch.isfinite(total) or not torch.isfinite(params.grad).all():
                        error_msg = f"Training diverged at epoch {epoch}: loss={float(total)}"
                        logger.error(error_msg)
                        raise TrainingDivergedError(error_msg)
                    optimizer.step()
                    epoch_bpr += float(bpr)
                    epoch_cl += float(cl)
                    epoch_total += float(total)

                metrics = EpochMetrics(epoch, epoch_bpr, epoch_cl, epoch_total)
                self.history.epochs.append(metrics)
                if metrics_handle is not None:
                    metrics_handle.write(json.dumps(metrics.to_dict()) + "\n")
                logger.debug(
                    f"epoch {epoch}: bpr={epoch_bpr:.6f} cl={epoch_cl:.6f} "
                    f"total={epoch_total:.6f}"
                )
        finally:
            if metrics_handle is not None:
                metrics_handle.close()

        self.params = params.detach().numpy().copy()
        return self.final_embeddings(self.params)

    def final_embeddings(self, params: np.ndarray) -> EmbeddingMatrix:
        E0 = EmbeddingMatrix(values=params, n_users=self.graph.n_users)
        adjacency = self.aug_adjacency if self.mode == MODE_VOTEGCL else self.adjacency
        stack = propagate(E0, adjacency, self.config.n_layers)
        return pool(stack, self.pooling)


def train_vanilla(
    graph: InteractionGraph, config: TrainConfig, metrics_path=None
) -> EmbeddingMatrix:
    return Trainer(graph, config, metrics_path=metrics_path).fit()


def train_votegcl(
    graph: InteractionGraph,
    aug_graph: Union[AugmentedGraph, InteractionGraph],
    config: TrainConfig,
    metrics_path=None,
) -> EmbeddingMatrix:
    """
    Two-view training from one shared E(0).

    Raises:
        TrainingError: aug_graph does not contain the observed graph
    """
    return Trainer(graph, config, aug_graph=aug_graph, metrics_path=metrics_path).fit()
