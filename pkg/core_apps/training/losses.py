"""
Loss terms and their weighted combination.

``total = beta[0] * vote + beta[1] * sum_layers(det) + beta[2] * (cap_mle + cap_scst)``
with ``det = alpha[0] * giou + alpha[1] * cls + alpha[2] * cnt + alpha[3] * size``.
"""
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from core_apps.common.exceptions import ShapeError, ValidationFailure
from core_apps.datasynth.vocabulary import EOS_ID, PAD_ID
from core_apps.geom.boxes import pairwise_giou, pairwise_iou
from core_apps.geom.structures import boxes_to_tensor
from core_apps.heads.captioning import sequence_logprob
from core_apps.training.matching import DEFAULT_ALPHA

DEFAULT_BETA = (10.0, 1.0, 5.0)
DETECTION_TERMS = ("giou", "cls", "cnt", "size")
LOG_FIELDS = ("vote",) + DETECTION_TERMS + ("cap_mle", "cap_scst", "total")


@dataclass(frozen=True)
class LossWeights:
    alpha: tuple = DEFAULT_ALPHA
    beta: tuple = DEFAULT_BETA

    @classmethod
    def from_config(cls, config):
        return cls(tuple(config.alpha), tuple(config.beta))


@dataclass
class LossBreakdown:
    """
    Scalar loss components of one step.

    ``giou``, ``cls``, ``cnt`` and ``size`` are summed over decoder layers;
    ``per_layer`` keeps each layer's terms.
    """

    vote: torch.Tensor
    giou: torch.Tensor
    cls: torch.Tensor
    cnt: torch.Tensor
    size: torch.Tensor
    cap_mle: torch.Tensor
    cap_scst: torch.Tensor
    per_layer: list = field(default_factory=list)
    total: torch.Tensor = None

    def as_floats(self):
        return {name: float(getattr(self, name)) for name in LOG_FIELDS}

    def detached(self):
        return LossBreakdown(**{name: getattr(self, name).detach() for name in LOG_FIELDS})

    @classmethod
    def average(cls, breakdowns):
        """Mean of every component over scenes, summed in list order."""
        n = len(breakdowns)
        values = {
            name: sum((getattr(b, name) for b in breakdowns[1:]), getattr(breakdowns[0], name)) / n
            for name in LOG_FIELDS
        }
        return cls(**values)


def _zero(like):
    return like.sum() * 0


def vote_loss(p_o, origin_index, p_enc, gts):
    """
    Mean L1 distance between voted query positions and their instance centers.

    A query's instance is the first ground-truth box containing the encoded
    point it was sampled from; queries sampled from background contribute 0.

    Args:
        p_o (Tensor): ``[M, 3]`` vote-shifted query positions.
        origin_index (Tensor): ``[M]`` indices into ``p_enc``.
        p_enc (Tensor): ``[n_enc, 3]`` encoded positions before voting.
        gts (list[Box3D]): ground-truth objects.
    """
    if p_o.shape[0] != origin_index.shape[0]:
        raise ShapeError("vote_loss: one origin index per voted query is required.")
    if p_o.shape[0] == 0:
        return _zero(p_o)
    origins = p_enc.detach()[origin_index]
    centers = torch.zeros_like(p_o)
    inside = torch.zeros(p_o.shape[0], dtype=torch.bool)
    for box in reversed(gts):
        lo = torch.tensor(box.minimum, dtype=origins.dtype)
        hi = torch.tensor(box.maximum, dtype=origins.dtype)
        hit = ((origins >= lo) & (origins <= hi)).all(dim=-1)
        centers[hit] = torch.tensor(box.center, dtype=p_o.dtype)
        inside |= hit
    distance = (p_o - centers).abs().sum(dim=-1)
    return torch.where(inside, distance, torch.zeros_like(distance)).sum() / p_o.shape[0]


def layer_detection_loss(pred, gts, assignment, no_object_weight=0.1):
    """
    Terms of one decoder layer.

    Matched predictions get box terms and their ground-truth class; the rest
    are "no object". The objectness head gets binary cross entropy against the
    matched/unmatched split, folded into ``cls``.

    Returns:
        dict: ``giou``, ``cls``, ``cnt`` and ``size`` scalars.
    """
    n = len(pred)
    n_class = pred.class_logits.shape[1] - 1
    pred_index, gt_index = assignment.pred_indices, assignment.gt_indices
    target = torch.full((n,), n_class, dtype=torch.long)
    is_object = torch.zeros(n, dtype=pred.objectness_logit.dtype)
    if len(assignment):
        classes = torch.tensor([gts[g].class_id for g in gt_index.tolist()], dtype=torch.long)
        target[pred_index] = classes
        is_object[pred_index] = 1.0
    weight = torch.ones(n_class + 1, dtype=pred.class_logits.dtype)
    weight[-1] = no_object_weight
    cls = F.cross_entropy(pred.class_logits, target, weight=weight)
    cls = cls + F.binary_cross_entropy_with_logits(pred.objectness_logit, is_object)
    if not len(assignment):
        zero = _zero(pred.boxes)
        return {"giou": zero, "cls": cls, "cnt": zero, "size": zero}
    matched = pred.boxes[pred_index]
    gt = boxes_to_tensor(gts, matched.dtype)[gt_index]
    giou = pairwise_giou(matched, gt).diagonal()
    if pred.iou_logit is not None:
        quality = pairwise_iou(matched.detach(), gt).diagonal()
        cls = cls + F.binary_cross_entropy_with_logits(pred.iou_logit[pred_index], quality)
    return {
        "giou": (1 - giou).mean(),
        "cls": cls,
        "cnt": (matched[:, :3] - gt[:, :3]).abs().sum(dim=-1).mean(),
        "size": (matched[:, 3:] - gt[:, 3:]).abs().sum(dim=-1).mean(),
    }


def detection_loss(per_layer_preds, gts, assignments, no_object_weight=0.1):
    """
    Per-layer terms and their sums over layers.

    Returns:
        tuple: ``(per_layer, sums)``; both hold ``giou``, ``cls``, ``cnt``, ``size``.
    """
    if len(per_layer_preds) != len(assignments):
        raise ShapeError("detection_loss: one assignment per decoder layer is required.")
    per_layer = [
        layer_detection_loss(pred, gts, assignment, no_object_weight)
        for pred, assignment in zip(per_layer_preds, assignments)
    ]
    sums = {
        term: sum((layer[term] for layer in per_layer[1:]), per_layer[0][term])
        for term in DETECTION_TERMS
    }
    return per_layer, sums


def weighted_detection(terms, alpha=DEFAULT_ALPHA):
    return sum(a * terms[name] for a, name in zip(alpha, DETECTION_TERMS))


def caption_mle_loss(logits, targets, ignore_index=PAD_ID):
    """
    Teacher-forced negative log-likelihood, summed over tokens.

    Args:
        logits (Tensor): ``[T, V]`` or ``[B, T, V]``; row ``t`` predicts ``targets[t]``.
        targets (Tensor): ``[T]`` or ``[B, T]``; ``ignore_index`` entries are skipped.

    Returns:
        Tensor: per-sequence sum, averaged over the batch.
    """
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(
            f"caption_mle_loss: logits {tuple(logits.shape)} do not match targets {tuple(targets.shape)}."
        )
    vocab = logits.shape[-1]
    real = targets != ignore_index
    if bool(((targets[real] < 0) | (targets[real] >= vocab)).any()):
        raise ValidationFailure("caption_mle_loss: reference contains an out-of-vocabulary id.")
    n_sequences = targets.shape[0] if targets.dim() == 2 else 1
    nll = F.cross_entropy(
        logits.reshape(-1, vocab), targets.reshape(-1), ignore_index=ignore_index, reduction="sum"
    )
    return nll / n_sequences


def strip_special(token_ids):
    return tuple(t for t in token_ids if t not in (EOS_ID, PAD_ID))


def scst_objective(logprobs, lengths, rewards, baseline):
    """
    ``-sum_i (r_i - b) * logprob_i / len_i``; rewards and baseline are constants.
    """
    advantage = torch.as_tensor(rewards, dtype=logprobs.dtype) - float(baseline)
    lengths = torch.as_tensor(lengths, dtype=logprobs.dtype)
    return -(advantage * logprobs / lengths).sum()


def scst_loss(head, prefix, beams, greedy, references, scorer):
    """
    Self-critical loss over the beam hypotheses of one object.

    Rewards are CIDEr against ``references`` under ``scorer``; the greedy
    caption's reward is the baseline.

    Args:
        head (CaptionHead): gradients flow through its log-probabilities.
        prefix (Tensor): ``[P, d_cap]``.
        beams (list[CaptionSequence]): ``k >= 1`` hypotheses.
        greedy (CaptionSequence): greedy decode of the same prefix.
        references (list[tuple]): reference token ids.
        scorer (CiderScorer): corpus statistics.
    """
    if not references:
        raise ValidationFailure("scst_loss needs at least one reference caption.")
    if not beams:
        raise ValidationFailure("scst_loss needs at least one beam hypothesis.")
    refs = [strip_special(r) for r in references]
    baseline = scorer.score(strip_special(greedy.token_ids), refs)
    rewards = [scorer.score(strip_special(b.token_ids), refs) for b in beams]
    logprobs = torch.stack([sequence_logprob(head, prefix, b.token_ids) for b in beams])
    return scst_objective(logprobs, [len(b) for b in beams], rewards, baseline)


def total_loss(breakdown, weights):
    """Exact weighted sum of the breakdown's components."""
    beta = weights.beta
    detection = weighted_detection(
        {name: getattr(breakdown, name) for name in DETECTION_TERMS}, weights.alpha
    )
    return (
        beta[0] * breakdown.vote
        + beta[1] * detection
        + beta[2] * (breakdown.cap_mle + breakdown.cap_scst)
    )
