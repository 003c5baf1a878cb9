from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch

from .errors import InvalidArgumentError

GROUND = "ground"
SATELLITE = "satellite"


@dataclass(frozen=True)
class LossParams:
    alpha: float = 10.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise InvalidArgumentError(f"alpha must be >= 0, got {self.alpha}")


class Triplet(NamedTuple):
    """
    Indices into a TripletBatch. For a ground anchor the triplet is
    (g[anchor], s[positive], s[negative]); for a satellite anchor the views swap.
    """
    anchor_view: str
    anchor: int
    positive: int
    negative: int


@dataclass
class TripletBatch:
    ground: torch.Tensor      # B x D, row i matches satellite row i
    satellite: torch.Tensor   # B x D

    def __post_init__(self) -> None:
        if self.ground.dim() != 2 or self.ground.shape != self.satellite.shape:
            raise InvalidArgumentError(
                f"ground {tuple(self.ground.shape)} and satellite "
                f"{tuple(self.satellite.shape)} embeddings must both be B x D"
            )

    @property
    def size(self) -> int:
        return int(self.ground.shape[0])


def exhaustive_triplets(batch: "TripletBatch | int") -> list[Triplet]:
    """
    Every anchor/positive/negative combination in a batch of matched pairs:
    ground anchors first, then satellite anchors, negatives in ascending order.
    2B(B-1) triplets in total.
    """
    batch_size = batch.size if isinstance(batch, TripletBatch) else int(batch)
    triplets: list[Triplet] = []
    for view in (GROUND, SATELLITE):
        for i in range(batch_size):
            for j in range(batch_size):
                if j != i:
                    triplets.append(Triplet(view, i, i, j))
    return triplets


def stable_softplus(z: torch.Tensor) -> torch.Tensor:
    """log(1 + exp(z)) without overflow for large |z|."""
    return torch.clamp(z, min=0) + torch.log1p(torch.exp(-torch.abs(z)))


def squared_distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return (a - b).pow(2).sum(dim=-1)


def soft_margin_triplet_loss(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negative: torch.Tensor,
    params: LossParams = LossParams(),
) -> torch.Tensor:
    """log(1 + exp(alpha * (|a - p|^2 - |a - n|^2))), elementwise over leading axes."""
    z = params.alpha * (squared_distance(anchor, positive) - squared_distance(anchor, negative))
    return stable_softplus(z)


def pairwise_squared_distances(ground: torch.Tensor, satellite: torch.Tensor) -> torch.Tensor:
    """D[i, j] = |g_i - s_j|^2, computed from differences rather than dot products."""
    return (ground[:, None, :] - satellite[None, :, :]).pow(2).sum(dim=-1)


def batch_loss(batch: TripletBatch, params: LossParams = LossParams()) -> torch.Tensor:
    """Mean soft-margin loss over all 2B(B-1) exhaustive triplets."""
    b = batch.size
    if b < 2:
        raise InvalidArgumentError(f"batch_loss needs at least 2 pairs, got {b}")
    dist = pairwise_squared_distances(batch.ground, batch.satellite)
    pos = torch.diagonal(dist)
    off = ~torch.eye(b, dtype=torch.bool, device=dist.device)
    # ground anchor i vs satellite negative j: D[i, j]
    z_ground = params.alpha * (pos[:, None] - dist)
    # satellite anchor i vs ground negative j: |s_i - g_j|^2 = D[j, i]
    z_satellite = params.alpha * (pos[:, None] - dist.t())
    terms = torch.cat([stable_softplus(z_ground)[off], stable_softplus(z_satellite)[off]])
    return terms.mean()


def triplet_terms(batch: TripletBatch, params: LossParams = LossParams()) -> torch.Tensor:
    """Per-triplet losses in exhaustive_triplets order (slow path, for inspection)."""
    views = {GROUND: batch.ground, SATELLITE: batch.satellite}
    other = {GROUND: batch.satellite, SATELLITE: batch.ground}
    terms = [
        soft_margin_triplet_loss(
            views[t.anchor_view][t.anchor],
            other[t.anchor_view][t.positive],
            other[t.anchor_view][t.negative],
            params,
        )
        for t in exhaustive_triplets(batch.size)
    ]
    if not terms:
        return batch.ground.new_zeros(0)
    return torch.stack(terms)
