"""
Three-stage training driver.

1. detector only, cosine schedule ``lr -> min_lr``;
2. joint training with teacher-forced captions: the detector at a constant
   small rate, the caption side on a cosine schedule;
3. self-critical caption training with the detector frozen.

Scenes of a batch may be processed on a thread pool. Each worker returns its
own gradients and the main thread sums them in scene order, so results do not
depend on the thread count.
"""
import logging
import math
import os

import numpy as np
import torch
from rest_framework.renderers import JSONRenderer

from core_apps.common.exceptions import DivergenceError
from core_apps.common.runtime import ordered_map
from core_apps.numerics.optim import Optimizer
from core_apps.pipeline.checkpoints import LAST, save_checkpoint, stage_filename
from core_apps.training.losses import LOG_FIELDS, LossBreakdown, LossWeights
from core_apps.training.objective import reference_scorer, scene_loss

logger = logging.getLogger(__name__)

STAGES = (1, 2, 3)
TRAIN_LOG = "train.log"
DIVERGENCE_DUMP = "divergence.json"


def format_log_line(step, stage, lr, values):
    parts = [f"step={step}", f"stage={stage}", f"lr={lr:.6e}"]
    parts += [f"{name}={values[name]:.6f}" for name in LOG_FIELDS]
    return " ".join(parts)


def epoch_order(seed, stage, epoch, n_scenes):
    """Scene order of one epoch, derived from ``(seed, stage, epoch)`` only."""
    return np.random.default_rng([seed, stage, epoch]).permutation(n_scenes).tolist()


class Trainer:
    """
    **Attributes:**
        - model (BiCACaptioner): network being trained.
        - scenes (list[SceneSample]): training set.
        - vocab (Vocabulary): written into every checkpoint.
        - out_dir (str): checkpoints, ``train.log`` and divergence dumps.
        - threads (int): scenes processed concurrently within a batch.
        - history (list[dict]): logged loss values of every step.
    """

    def __init__(self, model, scenes, vocab, out_dir, threads=1, weights=None):
        self.model = model
        self.config = model.config
        self.scenes = list(scenes)
        self.vocab = vocab
        self.out_dir = out_dir
        self.threads = threads
        self.weights = weights or LossWeights.from_config(self.config)
        self.scorer = reference_scorer(self.scenes, self.config.cider_reduce)
        self.completed = []
        self.history = []
        os.makedirs(out_dir, exist_ok=True)

    def schedule(self, stage):
        """``(epochs, batch, steps_per_epoch, total_steps)`` of a stage."""
        epochs = self.config.epochs[stage - 1]
        batch = min(self.config.batch[stage - 1], len(self.scenes))
        steps_per_epoch = math.ceil(len(self.scenes) / batch)
        return epochs, batch, steps_per_epoch, epochs * steps_per_epoch

    def param_groups(self, stage):
        config = self.config
        detector = [p for _, p in self.model.detector_parameters()]
        captioner = [p for _, p in self.model.captioner_parameters()]
        if stage == 1:
            return [{"name": "detector", "params": detector, "base_lr": config.lr, "min_lr": config.min_lr}]
        if stage == 2:
            return [
                {
                    "name": "detector",
                    "params": detector,
                    "base_lr": config.stage2_detector_lr,
                    "min_lr": config.stage2_detector_lr,
                },
                {
                    "name": "captioner",
                    "params": captioner,
                    "base_lr": config.stage2_caption_lr,
                    "min_lr": config.min_lr,
                },
            ]
        return [
            {"name": "captioner", "params": captioner, "base_lr": config.stage3_lr, "min_lr": config.stage3_lr}
        ]

    def build_optimizer(self, stage):
        self.model.freeze_detector(stage == 3)
        return Optimizer(
            self.param_groups(stage),
            total_steps=self.schedule(stage)[3],
            weight_decay=self.config.weight_decay,
            clip_norm=self.config.clip_norm,
        )

    def _scene_gradients(self, job):
        scene, stage, params, scale = job
        try:
            breakdown = scene_loss(self.model, scene, self.weights, stage, self.scorer)
        except DivergenceError as exc:
            return exc, None
        values = breakdown.as_floats()
        if not all(math.isfinite(v) for v in values.values()):
            return breakdown, None
        if breakdown.total.requires_grad:
            grads = torch.autograd.grad(breakdown.total * scale, params, allow_unused=True)
        else:
            grads = (None,) * len(params)
        return breakdown, grads

    def train_step(self, stage, step, batch, optimizer):
        """
        One optimizer update over ``batch``.

        Raises:
            DivergenceError: a scene produced a non-finite loss.
        """
        params = optimizer.parameters
        jobs = [(scene, stage, params, 1.0 / len(batch)) for scene in batch]
        results = ordered_map(self._scene_gradients, jobs, self.threads)
        for scene, (result, grads) in zip(batch, results):
            if grads is None:
                self._diverged(stage, step, scene, result)
        optimizer.zero_grad()
        for i, param in enumerate(params):
            total = None
            for _, grads in results:
                if grads[i] is not None:
                    total = grads[i].clone() if total is None else total + grads[i]
            param.grad = total if total is not None else torch.zeros_like(param)
        optimizer.step()
        return LossBreakdown.average([b.detached() for b, _ in results])

    def _diverged(self, stage, step, scene, result):
        if isinstance(result, DivergenceError):
            details = {"error": str(result), **result.diagnostics}
        else:
            details = {"losses": {k: repr(v) for k, v in result.as_floats().items()}}
        diagnostics = {"stage": stage, "step": step, "scene_seed": scene.seed, **details}
        path = os.path.join(self.out_dir, DIVERGENCE_DUMP)
        with open(path, "wb") as fh:
            fh.write(JSONRenderer().render(diagnostics))
        logger.error("non-finite loss at stage %d step %d; diagnostics in %s", stage, step, path)
        raise DivergenceError(
            f"Non-finite loss at stage {stage}, step {step} (scene seed {scene.seed}).",
            diagnostics,
        )

    def _log(self, stage, step, lr, breakdown):
        values = breakdown.as_floats()
        self.history.append({"stage": stage, "step": step, "lr": lr, **values})
        if step % self.config.log_every and step != self.schedule(stage)[3]:
            return
        line = format_log_line(step, stage, lr, values)
        logger.info(line)
        with open(os.path.join(self.out_dir, TRAIN_LOG), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def save(self, name, stage, step, optimizer=None):
        return save_checkpoint(
            os.path.join(self.out_dir, name),
            self.model,
            self.vocab,
            stage,
            step,
            self.completed,
            optimizer,
        )

    def run_stage(self, stage, start_step=0, optimizer_state=None):
        """
        Train one stage from ``start_step`` to its end.

        Returns:
            str: path of the ``stageN.ckpt`` written at the end.
        """
        epochs, batch_size, steps_per_epoch, total_steps = self.schedule(stage)
        optimizer = self.build_optimizer(stage)
        if optimizer_state is not None:
            optimizer.load_state_dict(optimizer_state)
        logger.info(
            "stage %d: %d epochs x %d steps (batch %d), starting at step %d",
            stage, epochs, steps_per_epoch, batch_size, start_step,
        )
        self.model.train()
        for step in range(start_step, total_steps):
            epoch, position = divmod(step, steps_per_epoch)
            order = epoch_order(self.config.seed, stage, epoch, len(self.scenes))
            batch = [self.scenes[i] for i in order[position * batch_size:(position + 1) * batch_size]]
            lr = optimizer.lrs[optimizer.optimizer.param_groups[-1]["name"]]
            breakdown = self.train_step(stage, step + 1, batch, optimizer)
            self._log(stage, step + 1, lr, breakdown)
            if (step + 1) % self.config.checkpoint_every == 0 and step + 1 < total_steps:
                self.save(LAST, stage, step + 1, optimizer)
        self.completed.append(stage)
        self.save(LAST, stage, total_steps, optimizer)
        return self.save(stage_filename(stage), stage, total_steps, optimizer)

    def run(self, stages=STAGES, resume=None):
        """
        Train the requested stages in order.

        Args:
            stages (tuple[int]): subset of ``(1, 2, 3)``.
            resume (Checkpoint, optional): continue a partially trained stage.

        Returns:
            list[str]: stage checkpoint paths.
        """
        start_step, optimizer_state = 0, None
        if resume is not None:
            self.completed = list(resume.completed)
            resume.restore_rng()
            stages = [s for s in stages if s not in self.completed]
            if stages and resume.stage == stages[0] and resume.step > 0:
                start_step, optimizer_state = resume.step, resume.optimizer
        paths = []
        for stage in stages:
            paths.append(self.run_stage(stage, start_step, optimizer_state))
            start_step, optimizer_state = 0, None
        return paths
