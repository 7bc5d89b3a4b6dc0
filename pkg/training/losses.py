"""
Training objectives on torch tensors.

- bpr_objective: sum over triples of softplus(-(ŷ_ui - ŷ_uj))
- info_nce_objective: two-view InfoNCE over L2-normalized batch nodes
- total_loss: L_BPR + λ L_cl

The *_objective functions return scalar tensors for the trainer's autograd
graph. bpr_loss and info_nce_loss evaluate the same objectives on plain
arrays and return (loss, gradient) with gradients shaped like the
embedding matrix (zero outside the rows the batch touches).
"""

import numpy as np
import torch
import torch.nn.functional as F

from embeddings.models import EmbeddingMatrix

from .models import DegenerateEmbeddingError, TrainingConfigError, TrainingError, TripleBatch


def as_tensor(E, requires_grad=False) -> torch.Tensor:
    """float64 leaf tensor from an EmbeddingMatrix, array or tensor."""
    if isinstance(E, torch.Tensor):
        tensor = E.detach().clone().to(torch.float64)
    else:
        values = E.values if isinstance(E, EmbeddingMatrix) else E
        tensor = torch.tensor(np.asarray(values, dtype=np.float64))
    return tensor.requires_grad_(requires_grad)


def bpr_objective(rep: torch.Tensor, batch: TripleBatch) -> torch.Tensor:
    """-log σ(x) is evaluated as softplus(-x)."""
    n_users = batch.n_users
    users = torch.as_tensor(batch.users, dtype=torch.long)
    pos_rows = torch.as_tensor(batch.pos_items, dtype=torch.long) + n_users
    neg_rows = torch.as_tensor(batch.neg_items, dtype=torch.long) + n_users

    e_u = rep[users]
    margin = (e_u * (rep[pos_rows] - rep[neg_rows])).sum(dim=1)
    return F.softplus(-margin).sum()


def normalize_rows(rows: torch.Tensor) -> torch.Tensor:
    """
    z = e / ||e||_2 per row.

    Raises:
        DegenerateEmbeddingError: a row has zero norm
    """
    norms = torch.linalg.vector_norm(rows, dim=1)
    zero = int((norms == 0.0).sum())
    if zero:
        raise DegenerateEmbeddingError(f"degenerate embedding: {zero} zero-norm rows in batch")
    return rows / norms.unsqueeze(1)


def contrastive_logits(aug: torch.Tensor, org: torch.Tensor, nodes, tau: float) -> torch.Tensor:
    """s_ij = z_i . z_j,org / τ over the batch nodes."""
    if not tau > 0:
        raise TrainingConfigError(f"temperature must be > 0, got {tau}")
    index = torch.as_tensor(np.asarray(nodes, dtype=np.int64))
    z = normalize_rows(aug[index])
    w = normalize_rows(org[index])
    return (z @ w.T) / tau


def info_nce_objective(
    aug: torch.Tensor, org: torch.Tensor, nodes, tau: float, exclude_positive=False
) -> torch.Tensor:
    """
    Σ_i [ -s_ii + log Σ_j exp(s_ij) ].

    With exclude_positive=True the denominator runs over j != i instead.
    """
    if exclude_positive and len(nodes) < 2:
        raise TrainingError("The excluded-positive form needs at least 2 batch nodes")

    logits = contrastive_logits(aug, org, nodes, tau)
    positives = torch.diagonal(logits)
    denominator = logits
    if exclude_positive:
        mask = torch.eye(len(logits), dtype=torch.bool)
        denominator = logits.masked_fill(mask, float("-inf"))
    return (torch.logsumexp(denominator, dim=1) - positives).sum()


def bpr_loss(E, batch: TripleBatch):
    """Returns (loss, gradient); loss is summed, not averaged."""
    rep = as_tensor(E, requires_grad=True)
    loss = bpr_objective(rep, batch)
    loss.backward()
    return float(loss), rep.grad.numpy()


def info_nce_loss(E_aug_view, E_org_view, batch_nodes, tau: float, exclude_positive=False):
    """
    Returns (loss, grad_aug, grad_org).

    Raises:
        DegenerateEmbeddingError: a batch node has a zero-norm row in either view
    """
    aug = as_tensor(E_aug_view, requires_grad=True)
    org = as_tensor(E_org_view, requires_grad=True)
    loss = info_nce_objective(aug, org, batch_nodes, tau, exclude_positive=exclude_positive)
    loss.backward()
    return float(loss), aug.grad.numpy(), org.grad.numpy()


def total_loss(bpr, cl, cl_weight: float):
    """L_main = L_BPR + λ L_cl, λ in (0, 1). Works on floats and tensors."""
    if not 0.0 < cl_weight < 1.0:
        raise TrainingConfigError(f"cl_weight must be in (0, 1), got {cl_weight}")
    return bpr + cl_weight * cl
