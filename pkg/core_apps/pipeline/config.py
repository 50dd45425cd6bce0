"""
Model configuration, presets and the flat ``key = value`` config file format.

Precedence, lowest first: preset, config file, ``BICA_SEED``, command-line flags.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields, replace

from django.conf import settings
from rest_framework import serializers

from core_apps.common.exceptions import ConfigMismatchError, FormatError, ValidationFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    """
    Every hyperparameter of the pipeline.

    The defaults are the ``paper`` preset. Radii are in scene units; list-valued
    fields are tuples so the config stays hashable.
    """

    seed: int = 0
    # input
    n_points: int = 40000
    n_feats: int = 3
    # shared transformer widths
    d_model: int = 256
    n_heads: int = 4
    ffn_ratio: int = 4
    activation: str = "relu"
    # encoder
    n_tokens: int = 2048
    tokenizer_radius: float = 0.2
    tokenizer_nsample: int = 64
    tokenizer_mlp: tuple = (64, 128)
    mask_radius: float = 0.4
    n_enc: int = 1024
    downsample_radius: float = 0.4
    downsample_nsample: int = 32
    enc_layers: int = 2
    # queries
    n_instance: int = 256
    instance_radius: float = 0.3
    instance_nsample: int = 16
    n_context: int = 64
    context_seeds: int = 512
    context_radius: float = 1.2
    context_nsample: int = 64
    # decoders
    dec_layers: int = 8
    fourier_sigma: float = 1.0
    # contextual attention
    variant: str = "full"
    knn_k: int = 16
    prefix_tokens: int = 1
    # heads
    n_class: int = 12
    size_scale: float = 1.0
    iou_head: bool = False
    d_cap: int = 256
    cap_layers: int = 2
    cap_heads: int = 4
    max_caption_len: int = 20
    beam: int = 5
    # losses
    alpha: tuple = (10.0, 1.0, 5.0, 1.0)
    beta: tuple = (10.0, 1.0, 5.0)
    no_object_weight: float = 0.1
    # optimization
    lr: float = 5e-4
    min_lr: float = 1e-6
    weight_decay: float = 0.1
    clip_norm: float = 0.1
    stage2_detector_lr: float = 1e-6
    stage2_caption_lr: float = 1e-4
    stage3_lr: float = 1e-6
    epochs: tuple = (1080, 720, 180)
    batch: tuple = (8, 8, 2)
    # evaluation and bookkeeping
    nms_iou: float = 0.5
    objectness_threshold: float = 0.5
    cider_reduce: str = "max"
    checkpoint_every: int = 500
    log_every: int = 10


PAPER = ModelConfig()

TINY = replace(
    PAPER,
    n_points=2048,
    d_model=64,
    n_tokens=512,
    tokenizer_radius=0.5,
    tokenizer_nsample=32,
    tokenizer_mlp=(32,),
    mask_radius=1.0,
    n_enc=256,
    downsample_radius=1.0,
    downsample_nsample=32,
    n_instance=64,
    instance_radius=0.6,
    n_context=16,
    context_seeds=128,
    context_radius=2.0,
    dec_layers=2,
    d_cap=64,
    beam=3,
    lr=1e-3,
    min_lr=1e-5,
    stage2_detector_lr=1e-5,
    stage2_caption_lr=5e-4,
    stage3_lr=1e-5,
    epochs=(1200, 800, 100),
    batch=(4, 4, 2),
    checkpoint_every=100,
)

PRESETS = {"paper": PAPER, "tiny": TINY}


def config_hash(config):
    """SHA-256 of the canonical JSON form."""
    canonical = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_config_text(text):
    """
    Parse ``key = value`` lines into a dict of strings.

    Blank lines and ``#`` comments are ignored.

    Example:
        >>> parse_config_text("# tiny run\\nd_model = 64\\nbatch = 4,4,2")
        {'d_model': '64', 'batch': '4,4,2'}
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValidationFailure(f"config line {lineno}: expected 'key = value', got {raw!r}.")
        values[key.strip()] = value.strip()
    return values


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise FormatError(f"Cannot read config file {path}: {exc}") from exc


def format_config(config):
    """Render a config in the file format, one key per line in field order."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(preset=None, path=None, overrides=None):
    """
    Resolve a ``ModelConfig``.

    Args:
        preset (str, optional): ``paper`` or ``tiny``; defaults to settings.
        path (str, optional): config file; may itself name a ``preset``.
        overrides (dict, optional): command-line values; ``None`` entries are skipped.

    Raises:
        ValidationFailure: unknown preset, unknown key or invalid value.
    """
    from core_apps.pipeline.serializers import ModelConfigSerializer

    file_values = read_config_file(path) if path else {}
    preset = file_values.pop("preset", None) or preset or settings.BICA_DEFAULT_PRESET
    if preset not in PRESETS:
        raise ValidationFailure(f"Unknown preset {preset!r}; choose from {sorted(PRESETS)}.")
    known = {f.name for f in fields(ModelConfig)}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise ValidationFailure(f"Unknown config keys: {', '.join(unknown)}.")

    values = asdict(PRESETS[preset])
    values.update(file_values)
    if settings.BICA_SEED is not None:
        values["seed"] = settings.BICA_SEED
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})

    serializer = ModelConfigSerializer(data=values)
    try:
        serializer.is_valid(raise_exception=True)
    except serializers.ValidationError as exc:
        raise ValidationFailure(f"Invalid config: {exc.detail}") from exc
    config = serializer.save()
    logger.debug("resolved %s preset config %s", preset, config_hash(config)[:12])
    return config


def config_from_dict(values):
    """Rebuild a ``ModelConfig`` from its ``asdict`` form, as stored in checkpoints."""
    known = {f.name for f in fields(ModelConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigMismatchError(f"Stored config has unknown keys: {', '.join(unknown)}.")
    return ModelConfig(
        **{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    )
