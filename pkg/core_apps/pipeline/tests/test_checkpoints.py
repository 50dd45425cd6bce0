import os
import tempfile
from dataclasses import replace

import torch
from django.test import SimpleTestCase

from core_apps.bica.captioner import BiCACaptioner
from core_apps.common.exceptions import ConfigMismatchError, FormatError, FormatVersionError
from core_apps.common.runtime import seed_everything
from core_apps.datasynth.vocabulary import Vocabulary
from core_apps.pipeline.checkpoints import load_checkpoint, save_checkpoint, stage_filename
from core_apps.pipeline.tests.factories import ModelConfigFactory


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.config = ModelConfigFactory()
        self.vocab = Vocabulary.default()
        seed_everything(self.config.seed)
        self.model = BiCACaptioner(self.config, len(self.vocab))
        self.path = os.path.join(self.tmp.name, stage_filename(1))

    def test_round_trip_is_bit_exact(self):
        """Test parameters, position and vocabulary survive a save and load."""
        save_checkpoint(self.path, self.model, self.vocab, stage=2, step=7, completed=[1])
        checkpoint = load_checkpoint(self.path, self.config)
        self.assertEqual(checkpoint.config, self.config)
        self.assertEqual(checkpoint.vocab, self.vocab)
        self.assertEqual((checkpoint.stage, checkpoint.step, checkpoint.completed), (2, 7, [1]))
        self.assertIsNone(checkpoint.optimizer)
        for name, value in self.model.state_dict().items():
            self.assertTrue(torch.equal(checkpoint.state_dict[name], value), name)

        restored = BiCACaptioner(checkpoint.config, len(checkpoint.vocab))
        restored.load_state_dict(checkpoint.state_dict)
        for (name, a), (_, b) in zip(self.model.named_parameters(), restored.named_parameters()):
            self.assertTrue(torch.equal(a, b), name)

    def test_optimizer_and_rng_state(self):
        """Test optimizer state and the torch RNG state are stored."""
        optimizer = torch.optim.AdamW(self.model.parameters(), lr=1e-3)
        save_checkpoint(self.path, self.model, self.vocab, 1, 0, optimizer=optimizer)
        expected = torch.rand(3)
        checkpoint = load_checkpoint(self.path)
        self.assertIn("param_groups", checkpoint.optimizer)
        checkpoint.restore_rng()
        self.assertTrue(torch.equal(torch.rand(3), expected))

    def test_no_temporary_file_left(self):
        """Test the atomic write leaves only the checkpoint behind."""
        save_checkpoint(self.path, self.model, self.vocab, 1, 0)
        self.assertEqual(os.listdir(self.tmp.name), [stage_filename(1)])

    def test_config_mismatch(self):
        """Test another config is refused unless forced."""
        save_checkpoint(self.path, self.model, self.vocab, 1, 0)
        other = replace(self.config, lr=1.0)
        with self.assertRaises(ConfigMismatchError):
            load_checkpoint(self.path, other)
        with self.assertLogs("core_apps.pipeline.checkpoints", level="WARNING"):
            checkpoint = load_checkpoint(self.path, other, force=True)
        self.assertEqual(checkpoint.config, self.config)

    def test_version_mismatch(self):
        """Test an unknown format version is rejected."""
        torch.save({"format_version": 99}, self.path)
        with self.assertRaises(FormatVersionError):
            load_checkpoint(self.path)

    def test_missing_and_corrupt(self):
        """Test missing, truncated and foreign files are format errors."""
        with self.assertRaises(FormatError):
            load_checkpoint(self.path)
        with open(self.path, "wb") as fh:
            fh.write(b"not a checkpoint")
        with self.assertRaises(FormatError):
            load_checkpoint(self.path)
        torch.save([1, 2, 3], self.path)
        with self.assertRaises(FormatError):
            load_checkpoint(self.path)
