"""
Instance and context query generation.

Instance queries are sampled after shifting every encoded token by a learned
vote offset. Context queries are sampled from the unshifted token positions.
The two generators share no parameters.
"""
from dataclasses import dataclass

import torch
from torch import nn

from core_apps.geom.sampling import SetAbstraction, farthest_point_sampling
from core_apps.geom.structures import Points
from core_apps.numerics.ops import MLP


@dataclass
class VoteOffsets:
    dp: torch.Tensor
    df: torch.Tensor


@dataclass
class QuerySet:
    """
    **Attributes:**
        - kind (str): ``instance`` or ``context``.
        - positions (Tensor): ``[nq, 3]``.
        - feats (Tensor): ``[nq, d_model]``.
        - origin_index (Tensor): ``[nq]`` encoded token each query was sampled at.
    """

    kind: str
    positions: torch.Tensor
    feats: torch.Tensor
    origin_index: torch.Tensor

    def __len__(self):
        return self.positions.shape[0]


class InstanceQueryGenerator(nn.Module):
    def __init__(self, d_model, n_queries, radius, nsample, activation="relu"):
        super().__init__()
        self.vote = MLP([d_model, d_model, 3 + d_model], activation)
        self.sa = SetAbstraction(n_queries, radius, nsample, [3 + d_model, d_model, d_model], activation)

    def votes(self, st):
        out = self.vote(st.f_enc)
        return VoteOffsets(dp=out[:, :3], df=out[:, 3:])

    def forward(self, st):
        """
        Returns:
            tuple: ``(QuerySet, VoteOffsets)``.
        """
        offsets = self.votes(st)
        shifted = Points(st.p_enc + offsets.dp, st.f_enc + offsets.df)
        out, center_index = self.sa(shifted)
        return QuerySet("instance", out.xyz, out.feats, center_index), offsets


class ContextQueryGenerator(nn.Module):
    """
    Context queries at farthest-point seeds of the encoded positions.

    ``n_seeds`` seeds are drawn by FPS over ``p_enc``; the ``n_queries`` centers
    are a second FPS over the seeds. Grouping runs over every encoded token.
    """

    def __init__(self, d_model, n_queries, n_seeds, radius, nsample, activation="relu"):
        super().__init__()
        self.n_seeds = n_seeds
        self.sa = SetAbstraction(n_queries, radius, nsample, [3 + d_model, d_model, d_model], activation)

    def centers(self, p_enc):
        seeds = farthest_point_sampling(p_enc, self.n_seeds)
        return seeds[farthest_point_sampling(p_enc[seeds], self.sa.npoint)]

    def forward(self, st):
        center_index = self.centers(st.p_enc)
        out, _ = self.sa(Points(st.p_enc, st.f_enc), center_index=center_index)
        return QuerySet("context", out.xyz, out.feats, center_index)
