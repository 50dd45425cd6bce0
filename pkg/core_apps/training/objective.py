"""
Per-scene training objective for each stage.

Stage 1 trains the detector (vote and detection terms), stage 2 adds the
teacher-forced caption loss, stage 3 replaces it with the self-critical loss.
Captions are supervised on the instance queries matched by the final decoder
layer.
"""
import torch

from core_apps.common.exceptions import ValidationFailure
from core_apps.datasynth.vocabulary import PAD_ID
from core_apps.evalmetrics.captions import CiderScorer
from core_apps.heads.captioning import beam_search, greedy_decode
from core_apps.numerics.ops import assert_finite
from core_apps.training.losses import (
    LossBreakdown,
    caption_mle_loss,
    detection_loss,
    scst_loss,
    strip_special,
    total_loss,
    vote_loss,
)
from core_apps.training.matching import match_layers


def reference_scorer(scenes, reduce="max"):
    """CIDEr scorer whose documents are the reference sets of every object."""
    corpus = [
        [strip_special(ref) for ref in refs] for scene in scenes for refs in scene.captions
    ]
    return CiderScorer(corpus, reduce)


def caption_batch(prefix_tokens, pairs, captions):
    """
    One row per (matched query, reference caption), padded with PAD.

    Returns:
        tuple: ``(prefixes [B, P, d_cap], ids [B, T])``.
    """
    prefixes, refs = [], []
    for pred_index, gt_index in pairs:
        for ref in captions[gt_index]:
            prefixes.append(prefix_tokens[pred_index])
            refs.append(ref)
    length = max(len(r) for r in refs)
    ids = torch.full((len(refs), length), PAD_ID, dtype=torch.long)
    for row, ref in enumerate(refs):
        ids[row, : len(ref)] = torch.tensor(ref, dtype=torch.long)
    return torch.stack(prefixes), ids


def mle_term(model, outputs, pairs, captions):
    prefixes, ids = caption_batch(outputs.prefix.tokens, pairs, captions)
    logits = model.caption_head(prefixes, ids)[:, : ids.shape[1]]
    return caption_mle_loss(logits, ids)


def scst_term(model, outputs, pairs, captions, scorer):
    config = model.config
    losses = []
    for pred_index, gt_index in pairs:
        prefix = outputs.prefix.tokens[pred_index]
        beams = beam_search(model.caption_head, prefix.detach(), config.beam, config.max_caption_len)
        greedy = greedy_decode(model.caption_head, prefix.detach(), config.max_caption_len)
        losses.append(
            scst_loss(model.caption_head, prefix, beams, greedy, captions[gt_index], scorer)
        )
    return torch.stack(losses).mean()


def scene_loss(model, scene, weights, stage, scorer=None):
    """
    Loss breakdown of one scene.

    Args:
        model (BiCACaptioner): the network.
        scene (SceneSample): points, boxes and reference captions.
        weights (LossWeights): alpha and beta.
        stage (int): 1, 2 or 3.
        scorer (CiderScorer, optional): reward corpus, required in stage 3.
    """
    if stage not in (1, 2, 3):
        raise ValidationFailure(f"Unknown training stage {stage}.")
    if stage == 3 and scorer is None:
        raise ValidationFailure("Stage 3 needs a CIDEr scorer for the rewards.")
    outputs = model(scene.points, with_captions=stage >= 2)
    for layer, pred in enumerate(outputs.predictions):
        assert_finite(pred.boxes.detach(), f"layer {layer} boxes")
        assert_finite(pred.class_logits.detach(), f"layer {layer} class logits")
    gts = scene.boxes
    assignments = match_layers(outputs.predictions, gts, weights.alpha)
    vote = vote_loss(
        outputs.instance.positions, outputs.instance.origin_index, outputs.tokens.p_enc, gts
    )
    per_layer, sums = detection_loss(
        outputs.predictions, gts, assignments, model.config.no_object_weight
    )
    zero = vote * 0
    cap_mle, cap_scst = zero, zero
    pairs = assignments[-1].pairs
    if stage == 2 and pairs:
        cap_mle = mle_term(model, outputs, pairs, scene.captions)
    elif stage == 3 and pairs:
        cap_scst = scst_term(model, outputs, pairs, scene.captions, scorer)
    breakdown = LossBreakdown(vote=vote, cap_mle=cap_mle, cap_scst=cap_scst, per_layer=per_layer, **sums)
    breakdown.total = total_loss(breakdown, weights)
    return breakdown
