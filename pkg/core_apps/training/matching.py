"""
Bipartite matching between box predictions and ground-truth objects.
"""
from dataclasses import dataclass

import torch
from scipy.optimize import linear_sum_assignment

from core_apps.common.exceptions import ShapeError, ValidationFailure
from core_apps.common.replay import replayable
from core_apps.geom.boxes import pairwise_giou
from core_apps.geom.structures import boxes_to_tensor

DEFAULT_ALPHA = (10.0, 1.0, 5.0, 1.0)


@dataclass(frozen=True)
class MatchAssignment:
    """
    **Attributes:**
        - pairs (tuple): ``(prediction_index, gt_index)`` sorted by prediction index.
          Predictions not listed are "no object".
        - total (float): summed cost of the pairs.
    """

    pairs: tuple
    total: float = 0.0

    def __len__(self):
        return len(self.pairs)

    @property
    def pred_indices(self):
        return torch.tensor([p for p, _ in self.pairs], dtype=torch.long)

    @property
    def gt_indices(self):
        return torch.tensor([g for _, g in self.pairs], dtype=torch.long)


@replayable
def hungarian(cost):
    """
    Minimum-cost injective assignment of ``min(n, m)`` pairs.

    Args:
        cost (Tensor): ``[n_pred, n_gt]``.

    Raises:
        ValidationFailure: the matrix holds NaN or infinite costs.
    """
    if cost.dim() != 2:
        raise ShapeError(f"hungarian expects a 2-D cost matrix, got {tuple(cost.shape)}.")
    values = cost.detach().to(torch.float64).cpu().numpy()
    if values.size and not torch.isfinite(cost.detach()).all():
        raise ValidationFailure("hungarian: cost matrix contains non-finite values.")
    if values.size == 0:
        return MatchAssignment(())
    rows, cols = linear_sum_assignment(values)
    pairs = tuple(sorted(zip(rows.tolist(), cols.tolist())))
    return MatchAssignment(pairs, float(sum(values[r, c] for r, c in pairs)))


def match_cost(pred, gts, alpha=DEFAULT_ALPHA):
    """
    Matching cost of one decoder layer, weighted like the detection loss.

    ``alpha[0] * (1 - GIoU) - alpha[1] * p(gt class) + alpha[2] * L1(center)
    + alpha[3] * L1(size)``.

    Args:
        pred (BoxPrediction): ``n`` predictions.
        gts (list[Box3D]): non-empty ground truth.

    Returns:
        Tensor: ``[n, len(gts)]``, detached.
    """
    if not gts:
        raise ValidationFailure("match_cost needs at least one ground-truth object.")
    with torch.no_grad():
        boxes = pred.boxes
        gt = boxes_to_tensor(gts, boxes.dtype)
        classes = torch.tensor([b.class_id for b in gts], dtype=torch.long)
        giou = pairwise_giou(boxes, gt)
        class_prob = pred.class_prob[:, classes]
        center = torch.cdist(boxes[:, :3], gt[:, :3], p=1)
        size = torch.cdist(boxes[:, 3:], gt[:, 3:], p=1)
        return alpha[0] * (1 - giou) - alpha[1] * class_prob + alpha[2] * center + alpha[3] * size


def match_layers(per_layer_preds, gts, alpha=DEFAULT_ALPHA):
    """Re-match every decoder layer independently."""
    if not gts:
        return [MatchAssignment(()) for _ in per_layer_preds]
    return [hungarian(match_cost(pred, gts, alpha)) for pred in per_layer_preds]
