"""
Tests for the three-stage training driver.
"""
import os
import re
import tempfile

import torch
from django.test import SimpleTestCase

from core_apps.bica.captioner import BiCACaptioner
from core_apps.common.exceptions import DivergenceError
from core_apps.common.runtime import seed_everything
from core_apps.datasynth.scenes import make_scene
from core_apps.datasynth.vocabulary import Vocabulary
from core_apps.pipeline.checkpoints import LAST, load_checkpoint
from core_apps.pipeline.tests.factories import ModelConfigFactory
from core_apps.training.trainer import (
    TRAIN_LOG,
    Trainer,
    epoch_order,
    format_log_line,
)

LOG_PATTERN = re.compile(
    r"^step=\d+ stage=[123] lr=\S+ vote=\S+ giou=\S+ cls=\S+ cnt=\S+ size=\S+ "
    r"cap_mle=\S+ cap_scst=\S+ total=\S+$"
)


class Interrupted(Exception):
    pass


class InterruptingTrainer(Trainer):
    """Stops before the given step of stage 1."""

    stop_at = 3

    def train_step(self, stage, step, batch, optimizer):
        if stage == 1 and step == self.stop_at:
            raise Interrupted()
        return super().train_step(stage, step, batch, optimizer)


def parameter_bytes(named_parameters):
    return {name: p.detach().clone() for name, p in named_parameters}


class TrainerTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.vocab = Vocabulary.default()
        self.config = ModelConfigFactory()
        self.scenes = [make_scene(seed, 2, n_points=self.config.n_points) for seed in (21, 22)]

    def make_trainer(self, config=None, out="run", threads=1, cls=Trainer):
        config = config or self.config
        seed_everything(config.seed)
        model = BiCACaptioner(config, len(self.vocab))
        return cls(model, self.scenes, self.vocab, os.path.join(self.tmp.name, out), threads)


class HelperTests(SimpleTestCase):
    def test_log_line_format(self):
        """Test the labelled log line."""
        values = dict.fromkeys(
            ("vote", "giou", "cls", "cnt", "size", "cap_mle", "cap_scst", "total"), 0.5
        )
        line = format_log_line(7, 2, 1e-4, values)
        self.assertTrue(line.startswith("step=7 stage=2 lr=1.000000e-04 vote=0.500000"))
        self.assertRegex(line, LOG_PATTERN)

    def test_epoch_order(self):
        """Test the order is a permutation fixed by seed, stage and epoch."""
        order = epoch_order(0, 1, 3, 10)
        self.assertEqual(sorted(order), list(range(10)))
        self.assertEqual(order, epoch_order(0, 1, 3, 10))
        self.assertNotEqual(order, epoch_order(0, 1, 4, 10))


class ScheduleTests(TrainerTestCase):
    def test_schedule(self):
        """Test epochs times batches per epoch gives the stage length."""
        trainer = self.make_trainer(ModelConfigFactory(epochs=(3, 2, 1), batch=(1, 2, 2)))
        self.assertEqual(trainer.schedule(1), (3, 1, 2, 6))
        self.assertEqual(trainer.schedule(2), (2, 2, 1, 2))

    def test_stage_learning_rates(self):
        """Test per-stage parameter groups and their rates."""
        trainer = self.make_trainer()
        self.assertEqual(trainer.build_optimizer(1).lrs, {"detector": self.config.lr})
        self.assertEqual(
            trainer.build_optimizer(2).lrs,
            {"detector": self.config.stage2_detector_lr, "captioner": self.config.stage2_caption_lr},
        )
        self.assertEqual(trainer.build_optimizer(3).lrs, {"captioner": self.config.stage3_lr})


class TrainingRunTests(TrainerTestCase):
    def test_full_run_writes_checkpoints_and_log(self):
        """Test all three stages leave stage checkpoints, last.ckpt and a labelled log."""
        trainer = self.make_trainer()
        paths = trainer.run()
        self.assertEqual([os.path.basename(p) for p in paths], ["stage1.ckpt", "stage2.ckpt", "stage3.ckpt"])
        final = load_checkpoint(os.path.join(trainer.out_dir, LAST), self.config)
        self.assertEqual(final.completed, [1, 2, 3])
        self.assertEqual(final.stage, 3)
        self.assertEqual(load_checkpoint(paths[0]).completed, [1])
        with open(os.path.join(trainer.out_dir, TRAIN_LOG), encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        self.assertEqual(len(lines), 5)
        for line in lines:
            self.assertRegex(line, LOG_PATTERN)

    def test_stage_three_freezes_detector(self):
        """Test self-critical training leaves every detector parameter bit-identical."""
        trainer = self.make_trainer()
        before = parameter_bytes(trainer.model.detector_parameters())
        captioner_before = parameter_bytes(trainer.model.captioner_parameters())
        trainer.run(stages=(3,))
        after = parameter_bytes(trainer.model.detector_parameters())
        for name, value in before.items():
            self.assertTrue(torch.equal(value, after[name]), name)
        changed = parameter_bytes(trainer.model.captioner_parameters())
        self.assertTrue(any(not torch.equal(v, changed[n]) for n, v in captioner_before.items()))

    def test_reproducible(self):
        """Test two runs with the same seed log identical losses."""
        first = self.make_trainer(out="a")
        first.run(stages=(1, 2))
        second = self.make_trainer(out="b")
        second.run(stages=(1, 2))
        self.assertEqual(first.history, second.history)

    def test_thread_count_does_not_change_results(self):
        """Test batches processed on two threads give the same losses and weights."""
        single = self.make_trainer(out="one")
        single.run(stages=(1,))
        threaded = self.make_trainer(out="two", threads=2)
        threaded.run(stages=(1,))
        self.assertEqual(single.history, threaded.history)
        for (name, a), (_, b) in zip(single.model.named_parameters(), threaded.model.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

    def test_resume_mid_stage(self):
        """Test resuming from last.ckpt reproduces the uninterrupted run."""
        config = ModelConfigFactory(epochs=(4, 1, 1))
        reference = self.make_trainer(config, out="full")
        reference.run(stages=(1,))

        interrupted = self.make_trainer(config, out="cut", cls=InterruptingTrainer)
        with self.assertRaises(Interrupted):
            interrupted.run(stages=(1,))
        checkpoint = load_checkpoint(os.path.join(interrupted.out_dir, LAST), config)
        self.assertEqual((checkpoint.stage, checkpoint.step), (1, 2))

        resumed = self.make_trainer(config, out="cut")
        resumed.model.load_state_dict(checkpoint.state_dict)
        resumed.run(stages=(1,), resume=checkpoint)
        self.assertEqual(resumed.history, reference.history[2:])
        for (name, a), (_, b) in zip(reference.model.named_parameters(), resumed.model.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

    def test_divergence(self):
        """Test a NaN loss aborts with exit code 3 and a diagnostic dump."""
        trainer = self.make_trainer()
        with torch.no_grad():
            trainer.model.heads.size.last.bias.fill_(float("nan"))
        with self.assertRaises(DivergenceError) as ctx:
            trainer.run(stages=(1,))
        self.assertEqual(ctx.exception.exit_code, 3)
        self.assertEqual(ctx.exception.diagnostics["stage"], 1)
        self.assertTrue(os.path.exists(os.path.join(trainer.out_dir, "divergence.json")))
