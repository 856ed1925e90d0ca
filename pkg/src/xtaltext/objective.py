"""Jensen-Shannon mutual-information losses, MLM loss, and the total.

The MI lower bound scores aligned pairs (joint distribution) against all
mismatched in-batch pairs (product of marginals) through a discriminator:

    bound = mean(-softplus(-T_pos)) - mean(softplus(T_neg))

Each alignment loss is the negated bound. Softplus is evaluated in its
numerically stable form, so scores of any magnitude are safe at 64-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

TWO_LN2 = 2.0 * math.log(2.0)


def jsd_bound(pos_scores: torch.Tensor, neg_scores: torch.Tensor) -> torch.Tensor:
    """MI lower bound from discriminator scores on joint vs marginal pairs."""
    if pos_scores.numel() == 0 or neg_scores.numel() == 0:
        raise ValueError("jsd_bound requires at least one positive and one negative score")
    return (-F.softplus(-pos_scores)).mean() - F.softplus(neg_scores).mean()


def score_pairs(discriminator, left: torch.Tensor, right: torch.Tensor):
    """Aligned pairs (i, i) are positives; all B(B-1) mismatches are negatives."""
    b = left.shape[0]
    if b < 2:
        raise ValueError(f"need a batch of at least 2 to build negative pairs, got {b}")
    pos = discriminator(left, right)
    ii, jj = torch.meshgrid(torch.arange(b), torch.arange(b), indexing="ij")
    off_diag = ii.reshape(-1) != jj.reshape(-1)
    neg = discriminator(left[ii.reshape(-1)[off_diag]], right[jj.reshape(-1)[off_diag]])
    return pos, neg


def inter_modal_loss(discriminator, z_graph: torch.Tensor, z_text: torch.Tensor) -> torch.Tensor:
    """Negated MI bound between aligned graph and text embeddings."""
    return -jsd_bound(*score_pairs(discriminator, z_graph, z_text))


def intra_modal_loss(discriminator, z: torch.Tensor, z_prime: torch.Tensor,
                     symmetrize: bool = False) -> torch.Tensor:
    """Same bound between two augmented views of one modality.

    The concatenated discriminator input is ordered, so the loss depends on
    argument order; with symmetrize=True each pair is scored in both orders
    and averaged, making the loss order-invariant.
    """
    if not symmetrize:
        return -jsd_bound(*score_pairs(discriminator, z, z_prime))
    b = z.shape[0]
    if b < 2:
        raise ValueError(f"need a batch of at least 2 to build negative pairs, got {b}")
    ii, jj = torch.meshgrid(torch.arange(b), torch.arange(b), indexing="ij")
    left, right = z[ii.reshape(-1)], z_prime[jj.reshape(-1)]
    scores = ((discriminator(left, right) + discriminator(right, left)) / 2).reshape(b, b)
    off_diag = ~torch.eye(b, dtype=torch.bool)
    return -jsd_bound(scores.diagonal(), scores[off_diag])


def mlm_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Summed cross-entropy over masked positions; zero when none are masked."""
    if logits.shape[0] == 0:
        return logits.new_zeros(())
    if int(targets.max()) >= logits.shape[1]:
        raise ValueError("MLM target id outside the vocabulary")
    return F.cross_entropy(logits, targets, reduction="sum")


@dataclass(frozen=True)
class LossWeights:
    inter_modal: float = 1.0
    intra_graph: float = 1.0
    intra_text: float = 1.0
    mlm: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    """Weighted loss terms per step; total is exactly their sum."""

    inter_modal: float
    intra_graph: float
    intra_text: float
    mlm: float
    total: float

    def as_dict(self) -> dict:
        return {
            "inter_modal": self.inter_modal,
            "intra_graph": self.intra_graph,
            "intra_text": self.intra_text,
            "mlm": self.mlm,
            "total": self.total,
        }


def total_loss(inter_modal: torch.Tensor, intra_graph: torch.Tensor,
               intra_text: torch.Tensor, mlm: torch.Tensor,
               weights: LossWeights = LossWeights()):
    """Weighted sum of the four terms; returns (tensor, breakdown)."""
    terms = {
        "inter_modal": weights.inter_modal * inter_modal,
        "intra_graph": weights.intra_graph * intra_graph,
        "intra_text": weights.intra_text * intra_text,
        "mlm": weights.mlm * mlm,
    }
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise FloatingPointError(f"non-finite {name} loss term")
    total = terms["inter_modal"] + terms["intra_graph"] + terms["intra_text"] + terms["mlm"]
    values = {name: float(value.detach()) for name, value in terms.items()}
    breakdown = LossBreakdown(
        inter_modal=values["inter_modal"],
        intra_graph=values["intra_graph"],
        intra_text=values["intra_text"],
        mlm=values["mlm"],
        total=values["inter_modal"] + values["intra_graph"] + values["intra_text"] + values["mlm"],
    )
    return total, breakdown
