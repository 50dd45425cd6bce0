"""
Checkpoint persistence.

A checkpoint is a ``torch.save`` dictionary holding the format version, the
config snapshot and its hash, the vocabulary, the training position (stage,
step within the stage, completed stages), the model ``state_dict``, the
optimizer state and the torch RNG state. Loading uses ``weights_only=True``.
"""
import logging
import os
import pickle
from dataclasses import asdict, dataclass, field
from typing import Optional

import torch

from core_apps.common.exceptions import ConfigMismatchError, FormatError, FormatVersionError
from core_apps.datasynth.vocabulary import Vocabulary
from core_apps.pipeline.config import config_from_dict, config_hash

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LAST = "last.ckpt"


def stage_filename(stage):
    return f"stage{stage}.ckpt"


@dataclass
class Checkpoint:
    """
    **Attributes:**
        - config (ModelConfig): configuration the model was built from.
        - vocab (Vocabulary): caption vocabulary.
        - stage (int): stage the position refers to.
        - step (int): optimizer steps completed within ``stage``.
        - completed (list[int]): stages finished so far.
        - state_dict (dict): model parameters and buffers.
        - optimizer (dict, optional): optimizer and schedule state.
        - rng (dict): ``{"torch": ByteTensor}``.
    """

    config: object
    vocab: Vocabulary
    stage: int
    step: int
    completed: list = field(default_factory=list)
    state_dict: dict = field(default_factory=dict)
    optimizer: Optional[dict] = None
    rng: dict = field(default_factory=dict)

    @property
    def config_hash(self):
        return config_hash(self.config)

    def restore_rng(self):
        if "torch" in self.rng:
            torch.set_rng_state(self.rng["torch"])


def save_checkpoint(path, model, vocab, stage, step, completed=(), optimizer=None):
    """Write atomically: a temporary file is renamed over ``path``."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "config_hash": config_hash(model.config),
        "vocab": list(vocab.tokens),
        "stage": int(stage),
        "step": int(step),
        "completed": [int(s) for s in completed],
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "optimizer": None if optimizer is None else optimizer.state_dict(),
        "rng": {"torch": torch.get_rng_state()},
    }
    tmp = f"{path}.tmp"
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except OSError as exc:
        raise FormatError(f"Cannot write checkpoint {path}: {exc}") from exc
    logger.info("saved checkpoint %s (stage %d, step %d)", path, stage, step)
    return path


def load_checkpoint(path, expected_config=None, force=False):
    """
    Read a checkpoint.

    Args:
        path (str): checkpoint file.
        expected_config (ModelConfig, optional): refuse a checkpoint written
            with a different config unless ``force``.
        force (bool): accept a config mismatch with a warning.

    Raises:
        FormatError: unreadable or corrupt file.
        FormatVersionError: unsupported ``format_version``.
        ConfigMismatchError: config hash differs and ``force`` is false.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError as exc:
        raise FormatError(f"Checkpoint {path} does not exist.") from exc
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as exc:
        raise FormatError(f"Cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise FormatError(f"{path} is not a checkpoint.")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise FormatVersionError(
            f"Checkpoint {path} has format version {payload['format_version']}, "
            f"expected {CHECKPOINT_VERSION}."
        )
    try:
        checkpoint = Checkpoint(
            config=config_from_dict(payload["config"]),
            vocab=Vocabulary(payload["vocab"]),
            stage=payload["stage"],
            step=payload["step"],
            completed=list(payload["completed"]),
            state_dict=payload["state_dict"],
            optimizer=payload["optimizer"],
            rng=payload["rng"],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"Checkpoint {path} is missing fields: {exc}") from exc
    if checkpoint.config_hash != payload["config_hash"]:
        raise FormatError(f"Checkpoint {path} has an inconsistent config hash.")
    if expected_config is not None and config_hash(expected_config) != checkpoint.config_hash:
        message = f"Checkpoint {path} was written with a different configuration."
        if not force:
            raise ConfigMismatchError(message + " Use --force to load it anyway.")
        logger.warning("%s Loading anyway (--force).", message)
    return checkpoint
