"""
Axis-aligned box overlap and non-maximum suppression.

Tensor boxes are ``[N, 6]`` rows of ``(cx, cy, cz, sx, sy, sz)``.
"""
import logging

import torch

logger = logging.getLogger(__name__)


def box_corners(boxes):
    half = boxes[..., 3:6] / 2
    return boxes[..., :3] - half, boxes[..., :3] + half


def box_volume(boxes):
    return boxes[..., 3:6].prod(dim=-1)


def _overlap(a, b):
    a_min, a_max = box_corners(a.unsqueeze(1))
    b_min, b_max = box_corners(b.unsqueeze(0))
    inter = (torch.minimum(a_max, b_max) - torch.maximum(a_min, b_min)).clamp(min=0).prod(dim=-1)
    union = box_volume(a).unsqueeze(1) + box_volume(b).unsqueeze(0) - inter
    enclosing = (torch.maximum(a_max, b_max) - torch.minimum(a_min, b_min)).prod(dim=-1)
    return inter, union, enclosing


def pairwise_iou(a, b):
    """``[Na, Nb]`` intersection over union."""
    inter, union, _ = _overlap(a, b)
    return inter / union


def pairwise_giou(a, b):
    """``[Na, Nb]`` generalized IoU, differentiable in both arguments."""
    inter, union, enclosing = _overlap(a, b)
    return inter / union - (enclosing - union) / enclosing


def box_iou_3d(a, b):
    """
    IoU of two ``Box3D``.

    Example:
        >>> box_iou_3d(Box3D((0, 0, 0), (1, 1, 1)), Box3D((0.5, 0, 0), (1, 1, 1)))
        0.3333333333333333
    """
    ta = a.as_tensor(torch.float64).unsqueeze(0)
    tb = b.as_tensor(torch.float64).unsqueeze(0)
    return float(pairwise_iou(ta, tb)[0, 0])


def box_giou_3d(a, b):
    """Generalized IoU of two ``Box3D``, in ``(-1, 1]``."""
    ta = a.as_tensor(torch.float64).unsqueeze(0)
    tb = b.as_tensor(torch.float64).unsqueeze(0)
    return float(pairwise_giou(ta, tb)[0, 0])


def nms_3d(boxes, scores, iou_threshold=0.5):
    """
    Greedy suppression by descending score.

    A box is dropped when its IoU with an already kept box exceeds
    ``iou_threshold``. Equal scores keep the lower index first.

    Returns:
        list[int]: kept indices in descending-score order.
    """
    if boxes.shape[0] == 0:
        return []
    order = torch.sort(scores.detach(), descending=True, stable=True).indices.tolist()
    iou = pairwise_iou(boxes.detach(), boxes.detach())
    keep = []
    for idx in order:
        if all(float(iou[idx, k]) <= iou_threshold for k in keep):
            keep.append(idx)
    logger.debug("nms: kept %d of %d boxes", len(keep), boxes.shape[0])
    return keep
