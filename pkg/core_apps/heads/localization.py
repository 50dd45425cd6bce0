"""
Localization heads shared by every decoder layer.
"""
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from core_apps.geom.structures import Box3D
from core_apps.numerics.ops import MLP


@dataclass
class BoxPrediction:
    """
    Predictions of one decoder layer for all ``n`` instance queries.

    **Attributes:**
        - center (Tensor): ``[n, 3]`` query position plus predicted offset.
        - size (Tensor): ``[n, 3]`` positive full extents.
        - class_logits (Tensor): ``[n, n_class + 1]``; the last column is "no object".
        - objectness_logit (Tensor): ``[n]``.
        - iou_logit (Tensor, optional): ``[n]`` predicted localization quality.
    """

    center: torch.Tensor
    size: torch.Tensor
    class_logits: torch.Tensor
    objectness_logit: torch.Tensor
    iou_logit: Optional[torch.Tensor] = None

    def __len__(self):
        return self.center.shape[0]

    @property
    def boxes(self):
        return torch.cat([self.center, self.size], dim=-1)

    @property
    def class_prob(self):
        return torch.softmax(self.class_logits, dim=-1)

    @property
    def objectness(self):
        return torch.sigmoid(self.objectness_logit)

    def box(self, index):
        """``Box3D`` of one prediction labelled with its most likely object class."""
        class_id = int(self.class_logits[index, :-1].argmax())
        return Box3D.from_tensor(self.boxes[index].detach(), class_id)


class LocalizationHeads(nn.Module):
    """
    Center offset, size, class and objectness MLPs, plus an optional IoU head.

    Size is ``softplus(x) * size_scale`` so every extent is strictly positive.
    """

    def __init__(self, d_model, n_class, size_scale=1.0, activation="relu", iou_head=False):
        super().__init__()
        self.size_scale = size_scale
        self.center = MLP([d_model, d_model, 3], activation)
        self.size = MLP([d_model, d_model, 3], activation)
        self.cls = MLP([d_model, d_model, n_class + 1], activation)
        self.objectness = MLP([d_model, d_model, 1], activation)
        self.iou = MLP([d_model, d_model, 1], activation) if iou_head else None

    def forward(self, vo_layer, positions):
        return BoxPrediction(
            center=positions + self.center(vo_layer),
            size=F.softplus(self.size(vo_layer)) * self.size_scale,
            class_logits=self.cls(vo_layer),
            objectness_logit=self.objectness(vo_layer).squeeze(-1),
            iou_logit=None if self.iou is None else self.iou(vo_layer).squeeze(-1),
        )


def localize(heads, vo_layers, positions):
    """Apply the same heads to every decoder layer output."""
    return [heads(vo, positions) for vo in vo_layers]
