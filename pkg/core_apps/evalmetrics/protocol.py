"""
Detection-aware caption evaluation.

Every annotated object is paired with the surviving proposal (after NMS) of
maximal IoU. ``m@k`` averages ``metric(caption, references)`` over all
annotated objects, counting only pairs whose IoU reaches ``k``.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from core_apps.evalmetrics.captions import bleu4, rouge_l
from core_apps.geom.boxes import pairwise_iou
from core_apps.geom.structures import boxes_to_tensor

logger = logging.getLogger(__name__)

IOU_THRESHOLDS = (0.25, 0.5)
DETECTION_IOU = 0.5


@dataclass(frozen=True)
class Proposal:
    box: object
    score: float
    caption: tuple

    @property
    def sort_key(self):
        return (-self.score, self.box.center, self.box.size, self.box.class_id, self.caption)


@dataclass(frozen=True)
class AnnotatedObject:
    box: object
    references: tuple


@dataclass
class SceneResult:
    """Surviving proposals and annotated objects of one scene."""

    proposals: list
    objects: list

    def ious(self):
        """``[n_objects, n_proposals]`` float64 IoU matrix."""
        if not self.proposals or not self.objects:
            return np.zeros((len(self.objects), len(self.proposals)))
        gt = boxes_to_tensor([o.box for o in self.objects], torch.float64)
        pred = boxes_to_tensor([p.box for p in self.proposals], torch.float64)
        return pairwise_iou(gt, pred).numpy()

    def assignments(self):
        """
        Best proposal per annotated object.

        Returns:
            list[tuple]: ``(proposal or None, iou)`` in object order.
        """
        ious = self.ious()
        pairs = []
        for i in range(len(self.objects)):
            if not self.proposals:
                pairs.append((None, 0.0))
                continue
            j = min(
                range(len(self.proposals)),
                key=lambda c: (-ious[i, c], self.proposals[c].sort_key),
            )
            pairs.append((self.proposals[j], float(ious[i, j])))
        return pairs


def m_at_k(scenes, metric, k):
    """
    Detection-gated caption score.

    Args:
        scenes (list[SceneResult]): NMS already applied to the proposals.
        metric (callable): ``metric(candidate_tokens, references) -> float``.
        k (float): IoU threshold.

    Returns:
        float: ``0.0`` when there are no annotated objects.
    """
    total, n_objects = 0.0, 0
    for scene in scenes:
        for obj, (proposal, iou) in zip(scene.objects, scene.assignments()):
            n_objects += 1
            if proposal is not None and iou >= k:
                total += metric(list(proposal.caption), [list(r) for r in obj.references])
    return total / n_objects if n_objects else 0.0


def matched_proposals(scenes, threshold=DETECTION_IOU):
    """Number of annotated objects whose assigned proposal reaches ``threshold``."""
    return sum(
        1
        for scene in scenes
        for proposal, iou in scene.assignments()
        if proposal is not None and iou >= threshold
    )


def average_recall(scenes, threshold=DETECTION_IOU):
    """Share of annotated objects covered by a same-class proposal with IoU >= threshold."""
    hits, n_objects = 0, 0
    for scene in scenes:
        ious = scene.ious()
        for i, obj in enumerate(scene.objects):
            n_objects += 1
            hits += any(
                p.box.class_id == obj.box.class_id and ious[i, j] >= threshold
                for j, p in enumerate(scene.proposals)
            )
    return hits / n_objects if n_objects else 0.0


def _average_precision(recall, precision):
    """All-point interpolated area under the precision/recall curve."""
    recall = np.concatenate([[0.0], recall, [1.0]])
    precision = np.concatenate([[0.0], precision, [0.0]])
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.nonzero(recall[1:] != recall[:-1])[0]
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


def mean_average_precision(scenes, threshold=DETECTION_IOU):
    """VOC-style mAP over the classes present in the annotations."""
    classes = sorted({o.box.class_id for s in scenes for o in s.objects})
    if not classes:
        return 0.0
    ious = [scene.ious() for scene in scenes]
    aps = []
    for class_id in classes:
        n_gt = sum(o.box.class_id == class_id for s in scenes for o in s.objects)
        detections = sorted(
            (
                (p.sort_key, s, j)
                for s, scene in enumerate(scenes)
                for j, p in enumerate(scene.proposals)
                if p.box.class_id == class_id
            ),
            key=lambda d: (d[0], d[1], d[2]),
        )
        taken = set()
        tp = np.zeros(len(detections))
        for rank, (_, s, j) in enumerate(detections):
            best, best_iou = None, threshold
            for i, obj in enumerate(scenes[s].objects):
                if obj.box.class_id != class_id or (s, i) in taken:
                    continue
                if ious[s][i, j] >= best_iou:
                    best, best_iou = i, ious[s][i, j]
            if best is not None:
                taken.add((s, best))
                tp[rank] = 1
        if not len(detections):
            aps.append(0.0)
            continue
        cum_tp = np.cumsum(tp)
        recall = cum_tp / n_gt
        precision = cum_tp / np.arange(1, len(detections) + 1)
        aps.append(_average_precision(recall, precision))
    return float(np.mean(aps))


@dataclass
class MetricsReport:
    """
    **Attributes:**
        - captions (dict): ``{metric: {"0.25": value, "0.5": value}}``.
        - detection (dict): ``ar@0.5`` and ``map@0.5``.
        - n_objects (int): annotated objects evaluated.
        - matched_proposals (int): objects whose assigned proposal has IoU >= 0.5.
    """

    captions: dict = field(default_factory=dict)
    detection: dict = field(default_factory=dict)
    n_objects: int = 0
    matched_proposals: int = 0

    def as_dict(self):
        return {
            "captions": {
                name: {key: values[key] for key in sorted(values, key=float)}
                for name, values in sorted(self.captions.items())
            },
            "detection": dict(sorted(self.detection.items())),
            "n_objects": self.n_objects,
            "matched_proposals": self.matched_proposals,
        }


def evaluate(scenes, cider_scorer, thresholds=IOU_THRESHOLDS):
    """
    Full report: CIDEr, BLEU-4 and ROUGE-L at every threshold plus detection diagnostics.
    """
    metrics = {"cider": cider_scorer.score, "bleu4": bleu4, "rouge_l": rouge_l}
    report = MetricsReport(
        captions={
            name: {str(k): m_at_k(scenes, metric, k) for k in thresholds}
            for name, metric in metrics.items()
        },
        detection={
            "ar@0.5": average_recall(scenes),
            "map@0.5": mean_average_precision(scenes),
        },
        n_objects=sum(len(s.objects) for s in scenes),
        matched_proposals=matched_proposals(scenes),
    )
    logger.info(
        "evaluated %d objects: cider@0.5=%.4f ar@0.5=%.4f",
        report.n_objects,
        report.captions["cider"][str(DETECTION_IOU)],
        report.detection["ar@0.5"],
    )
    return report
