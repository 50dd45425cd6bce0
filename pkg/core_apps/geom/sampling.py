"""
Farthest point sampling, ball query, KNN and set abstraction.

Distances are brute force. Index choices go through ``@replayable`` so the
gradient check can freeze them.
"""
import logging

import torch
from torch import nn

from core_apps.common.exceptions import ValidationFailure
from core_apps.common.replay import replayable
from core_apps.geom.structures import Points
from core_apps.numerics.ops import MLP

logger = logging.getLogger(__name__)


def pairwise_distances(a, b):
    """Euclidean distances ``[na, nb]`` computed without the matmul shortcut."""
    return torch.cdist(a, b, compute_mode="donot_use_mm_for_euclid_dist")


@replayable
def farthest_point_sampling(xyz, k, start_index=0):
    """
    Greedy max-min sampling.

    Args:
        xyz (Tensor): ``[n, 3]`` coordinates.
        k (int): number of indices, ``1 <= k <= n``.
        start_index (int): first selected index.

    Returns:
        Tensor: ``[k]`` long indices in selection order. Ties go to the lowest index.
    """
    n = xyz.shape[0]
    if not 1 <= k <= n:
        raise ValidationFailure(f"FPS needs 1 <= k <= n, got k={k} for n={n}.")
    xyz = xyz.detach()
    selected = torch.empty(k, dtype=torch.long)
    selected[0] = start_index
    min_dist = ((xyz - xyz[start_index]) ** 2).sum(dim=-1)
    min_dist[start_index] = float("-inf")
    for i in range(1, k):
        nxt = int(torch.argmax(min_dist))
        selected[i] = nxt
        min_dist = torch.minimum(min_dist, ((xyz - xyz[nxt]) ** 2).sum(dim=-1))
        min_dist[nxt] = float("-inf")
    return selected


@replayable
def ball_query(centers, xyz, radius, nsample):
    """
    Group up to ``nsample`` points within ``radius`` of each center.

    Points are taken in index order and groups are padded by repeating the
    first point found. A center with nothing in range gets its nearest
    point repeated and is flagged empty.

    Returns:
        tuple: ``(indices [nc, nsample] long, empty [nc] bool)``.
    """
    if radius <= 0:
        raise ValidationFailure(f"ball query radius must be positive, got {radius}.")
    dist = pairwise_distances(centers.detach(), xyz.detach())
    n = xyz.shape[0]
    inside = dist <= radius
    rank = torch.arange(n).expand_as(dist)
    order = torch.argsort(torch.where(inside, rank, rank + n), dim=-1)[:, :nsample]
    if order.shape[1] < nsample:
        order = torch.cat([order, order[:, :1].expand(-1, nsample - order.shape[1])], dim=1)
    count = inside.sum(dim=-1, keepdim=True)
    slot = torch.arange(nsample).unsqueeze(0)
    indices = torch.where(slot < count, order, order[:, :1])
    empty = count.squeeze(-1) == 0
    if bool(empty.any()):
        nearest = torch.argmin(dist, dim=-1, keepdim=True).expand(-1, nsample)
        indices = torch.where(empty.unsqueeze(-1), nearest, indices)
        logger.debug("ball query: %d of %d centers had no point in range", int(empty.sum()), len(empty))
    return indices, empty


@replayable
def knn(query, xyz, k):
    """``[nq, k]`` indices of the nearest points, ties by lowest index."""
    n = xyz.shape[0]
    if not 1 <= k <= n:
        raise ValidationFailure(f"knn needs 1 <= K <= n, got K={k} for n={n}.")
    dist = pairwise_distances(query.detach(), xyz.detach())
    return torch.sort(dist, dim=-1, stable=True).indices[:, :k]


@replayable
def _pool_index(grouped):
    return grouped.detach().argmax(dim=1, keepdim=True)


def max_pool(grouped):
    """Max over the group axis of ``[nc, nsample, d]``."""
    return grouped.gather(1, _pool_index(grouped)).squeeze(1)


class SetAbstraction(nn.Module):
    """
    FPS centers, ball-query grouping, shared per-point MLP and max-pool.

    The MLP input is ``[xyz - center; feats]``, so ``mlp_dims[0]`` must be
    ``3 + F``. A single entry in ``mlp_dims`` makes the MLP the identity.
    """

    def __init__(self, npoint, radius, nsample, mlp_dims, activation="relu"):
        super().__init__()
        self.npoint = npoint
        self.radius = radius
        self.nsample = nsample
        self.mlp = MLP(mlp_dims, activation, final_activation=len(mlp_dims) > 2)
        self.out_features = mlp_dims[-1]

    def forward(self, points, center_index=None):
        """
        Args:
            points (Points): input set.
            center_index (Tensor, optional): explicit center indices; FPS otherwise.

        Returns:
            tuple: ``(Points(centers, pooled), center_index)``.
        """
        if center_index is None:
            center_index = farthest_point_sampling(points.xyz, self.npoint)
        centers = points.xyz[center_index]
        group, _ = ball_query(centers, points.xyz, self.radius, self.nsample)
        rel = points.xyz[group] - centers.unsqueeze(1)
        grouped = rel if points.feats is None else torch.cat([rel, points.feats[group]], dim=-1)
        return Points(centers, max_pool(self.mlp(grouped))), center_index

    def extra_repr(self):
        return f"npoint={self.npoint}, radius={self.radius}, nsample={self.nsample}"
