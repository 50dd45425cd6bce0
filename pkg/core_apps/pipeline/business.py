import logging
import os
from dataclasses import replace

import torch
from rest_framework.renderers import JSONRenderer

from core_apps.bica.attention import VARIANTS
from core_apps.bica.captioner import BiCACaptioner
from core_apps.common.exceptions import ConfigMismatchError, ValidationFailure
from core_apps.common.runtime import git_describe, ordered_map, seed_everything
from core_apps.datasynth.scenes import class_name, make_dataset, make_scene
from core_apps.datasynth.storage import load_dataset, save_dataset
from core_apps.datasynth.vocabulary import Vocabulary
from core_apps.evalmetrics.captions import CiderScorer, tokenize
from core_apps.evalmetrics.protocol import AnnotatedObject, Proposal, SceneResult, evaluate
from core_apps.geom.boxes import nms_3d
from core_apps.heads.captioning import beam_search, greedy_decode
from core_apps.numerics.gradcheck import finite_difference_check
from core_apps.pipeline.checkpoints import LAST, load_checkpoint, stage_filename
from core_apps.pipeline.config import config_hash
from core_apps.training.losses import LossWeights
from core_apps.training.objective import scene_loss
from core_apps.training.trainer import STAGES, Trainer

logger = logging.getLogger(__name__)


def log_run_context(command, config=None):
    """Log the build and, when known, the config hash at the start of a command."""
    if config is None:
        logger.info("%s: build %s", command, git_describe())
    else:
        logger.info("%s: build %s config %s", command, git_describe(), config_hash(config))


class DatasetHelper:
    @classmethod
    def vocab_path(cls, data_path):
        return f"{data_path}.vocab"

    @classmethod
    def generate(cls, out, seed, scenes, objects_min, objects_max, n_points, overwrite=False, threads=1):
        """
        Generate and write a dataset plus its vocabulary file next to it.

        Raises:
            FileExistsError: ``out`` exists and ``overwrite`` is false.
        """
        if os.path.exists(out) and not overwrite:
            raise FileExistsError(f"{out} already exists; pass --overwrite to replace it.")
        samples = make_dataset(seed, scenes, objects_min, objects_max, n_points, threads)
        save_dataset(samples, out)
        Vocabulary.default().save(cls.vocab_path(out))
        return samples

    @classmethod
    def load(cls, path):
        """
        Returns:
            tuple: ``(scenes, vocab)``; the default vocabulary when no file sits next to the data.
        """
        scenes = load_dataset(path)
        vocab_file = cls.vocab_path(path)
        vocab = Vocabulary.load(vocab_file) if os.path.exists(vocab_file) else Vocabulary.default()
        return scenes, vocab


class ModelHelper:
    @classmethod
    def build(cls, config, vocab):
        """Seed every random source from ``config.seed`` and construct the network."""
        seed_everything(config.seed)
        return BiCACaptioner(config, len(vocab))

    @classmethod
    def from_checkpoint(cls, path, expected_config=None, force=False):
        """
        Returns:
            tuple: ``(model, checkpoint)`` with the model in eval mode.
        """
        checkpoint = load_checkpoint(path, expected_config, force)
        model = BiCACaptioner(checkpoint.config, len(checkpoint.vocab))
        model.load_state_dict(checkpoint.state_dict)
        model.eval()
        return model, checkpoint

    @classmethod
    def decode(cls, model, prefix, beam):
        """Best caption of one prefix; ``beam == 1`` takes the greedy path."""
        max_len = model.config.max_caption_len
        if beam == 1:
            return greedy_decode(model.caption_head, prefix, max_len)
        return beam_search(model.caption_head, prefix, beam, max_len)[0]

    @classmethod
    @torch.no_grad()
    def predict(cls, model, scene, vocab, nms_iou, beam, objectness_threshold=None):
        """
        Detect, suppress and caption the objects of one scene.

        Returns:
            list[Proposal]: NMS survivors in descending objectness, captions as words.
        """
        outputs = model(scene.points)
        final = outputs.final
        objectness = final.objectness
        keep = nms_3d(final.boxes, objectness, nms_iou)
        if objectness_threshold is not None:
            keep = [i for i in keep if float(objectness[i]) > objectness_threshold]
        proposals = []
        for index in keep:
            sequence = cls.decode(model, outputs.prefix.tokens[index], beam)
            words = tuple(tokenize(vocab.decode(sequence.token_ids)))
            proposals.append(Proposal(final.box(index), float(objectness[index]), words))
        return proposals


class TrainingHelper:
    @classmethod
    def parse_stages(cls, stage):
        if stage == "all":
            return STAGES
        if str(stage) in ("1", "2", "3"):
            return (int(stage),)
        raise ValidationFailure(f"Unknown stage {stage!r}; choose all, 1, 2 or 3.")

    @classmethod
    def train(cls, config, data, out_dir, stage="all", resume=False, init=None, force=False, threads=1):
        """
        Run the requested stages.

        A single later stage starts from ``init`` or, when absent, from the
        previous stage's checkpoint in ``out_dir`` if there is one.

        Returns:
            list[str]: stage checkpoint paths.
        """
        stages = cls.parse_stages(stage)
        scenes, vocab = DatasetHelper.load(data)
        model = ModelHelper.build(config, vocab)
        resume_from = None
        if resume:
            resume_from = load_checkpoint(os.path.join(out_dir, LAST), config, force)
            model.load_state_dict(resume_from.state_dict)
        else:
            previous = os.path.join(out_dir, stage_filename(stages[0] - 1))
            init = init or (previous if stages[0] > 1 and os.path.exists(previous) else None)
            if init:
                checkpoint = load_checkpoint(init, config, force)
                model.load_state_dict(checkpoint.state_dict)
                logger.info("initialized from %s (stages %s)", init, checkpoint.completed)
            elif stages[0] > 1:
                logger.warning("stage %d starts from freshly initialized weights", stages[0])
        trainer = Trainer(model, scenes, vocab, out_dir, threads)
        return trainer.run(stages, resume_from)


class EvaluationHelper:
    @classmethod
    def annotated(cls, scene, vocab):
        return [
            AnnotatedObject(box, tuple(tuple(tokenize(text)) for text in refs))
            for box, refs in zip(scene.boxes, scene.caption_texts(vocab))
        ]

    @classmethod
    def evaluate(cls, model, scenes, vocab, nms_iou=0.5, beam=None, threads=1):
        """
        m@k caption metrics and detection diagnostics over ``scenes``.

        Raises:
            ConfigMismatchError: the model's vocabulary size does not fit ``vocab``.
        """
        if model.caption_head.vocab_size != len(vocab):
            raise ConfigMismatchError(
                f"Model vocabulary has {model.caption_head.vocab_size} tokens, dataset has {len(vocab)}."
            )
        beam = beam or model.config.beam

        def run(scene):
            return SceneResult(
                ModelHelper.predict(model, scene, vocab, nms_iou, beam),
                cls.annotated(scene, vocab),
            )

        results = ordered_map(run, scenes, threads)
        scorer = CiderScorer([[list(r) for r in o.references] for s in results for o in s.objects])
        return evaluate(results, scorer)

    @classmethod
    def render(cls, report):
        return JSONRenderer().render(report.as_dict()) + b"\n"


class GradCheckHelper:
    @classmethod
    def run(cls, config, samples=50, h=1e-3, tolerance=1e-3):
        """Finite-difference check of the joint loss on a 2-object scene in float64."""
        vocab = Vocabulary.default()
        model = ModelHelper.build(config, vocab).double()
        scene = make_scene(config.seed, 2, n_points=config.n_points, vocab=vocab)
        weights = LossWeights.from_config(config)
        return finite_difference_check(
            lambda: scene_loss(model, scene, weights, 2).total,
            list(model.named_parameters()),
            n_samples=samples,
            h=h,
            tolerance=tolerance,
            seed=config.seed,
        )


class AblationHelper:
    COLUMNS = ("cider@0.25", "cider@0.5", "bleu4@0.5", "rouge_l@0.5", "ar@0.5")

    @classmethod
    def parse_variants(cls, variants):
        variants = list(variants or VARIANTS)
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ValidationFailure(
                f"Unknown variant(s) {', '.join(unknown)}; choose from {', '.join(VARIANTS)}."
            )
        return variants

    @classmethod
    def row(cls, report):
        captions = report.captions
        return {
            "cider@0.25": captions["cider"]["0.25"],
            "cider@0.5": captions["cider"]["0.5"],
            "bleu4@0.5": captions["bleu4"]["0.5"],
            "rouge_l@0.5": captions["rouge_l"]["0.5"],
            "ar@0.5": report.detection["ar@0.5"],
        }

    @classmethod
    def run(cls, config, data, out_dir, variants=None, seeds=1, threads=1):
        """
        Train and evaluate every variant on the training scenes, averaged over seeds.

        Returns:
            dict: variant to averaged metric row, in ``variants`` order.
        """
        variants = cls.parse_variants(variants)
        scenes, vocab = DatasetHelper.load(data)
        table = {}
        for variant in variants:
            rows = []
            for offset in range(seeds):
                run_config = replace(config, variant=variant, seed=config.seed + offset)
                run_dir = os.path.join(out_dir, variant.replace("+", "_"), f"seed{run_config.seed}")
                model = ModelHelper.build(run_config, vocab)
                Trainer(model, scenes, vocab, run_dir, threads).run()
                model.eval()
                rows.append(cls.row(EvaluationHelper.evaluate(model, scenes, vocab, config.nms_iou, threads=threads)))
            table[variant] = {c: sum(r[c] for r in rows) / len(rows) for c in cls.COLUMNS}
            logger.info("ablation %s: %s", variant, table[variant])
        return table

    @classmethod
    def format_table(cls, table):
        header = f"{'variant':<8} " + " ".join(f"{c:>12}" for c in cls.COLUMNS)
        lines = [header]
        for variant, row in table.items():
            lines.append(f"{variant:<8} " + " ".join(f"{row[c]:>12.4f}" for c in cls.COLUMNS))
        return "\n".join(lines)


def describe_proposal(proposal):
    box = proposal.box
    center = ", ".join(f"{v:.2f}" for v in box.center)
    size = ", ".join(f"{v:.2f}" for v in box.size)
    return (
        f"center=({center}) size=({size}) class={class_name(box.class_id).replace(' ', '-')} "
        f"objectness={proposal.score:.3f} caption={' '.join(proposal.caption)}"
    )
