"""
Scene encoder: set-abstraction tokenizer, one radius-masked transformer layer,
a set-abstraction downsample and plain transformer layers.
"""
import logging
import math
from dataclasses import dataclass

import torch
from torch import nn

from core_apps.common.exceptions import ValidationFailure
from core_apps.geom.sampling import SetAbstraction, pairwise_distances
from core_apps.geom.structures import Points
from core_apps.numerics.ops import MASK_VALUE, FeedForward, LayerNorm, MultiHeadAttention

logger = logging.getLogger(__name__)


@dataclass
class SceneTokens:
    """
    Encoded scene.

    **Attributes:**
        - p_enc (Tensor): ``[n_enc, 3]`` token positions, a subset of the tokenizer centers.
        - f_enc (Tensor): ``[n_enc, d_model]`` token features.
        - token_index (Tensor): ``[n_enc]`` rows of the tokenizer output kept by the downsample.
    """

    p_enc: torch.Tensor
    f_enc: torch.Tensor
    token_index: torch.Tensor

    def __len__(self):
        return self.p_enc.shape[0]


def local_attention_mask(xyz, radius):
    """Additive ``[n, n]`` mask that only lets tokens within ``radius`` attend."""
    n = xyz.shape[0]
    if math.isinf(radius):
        return torch.zeros(n, n, dtype=xyz.dtype)
    dist = pairwise_distances(xyz.detach(), xyz.detach())
    return torch.where(dist <= radius, 0.0, MASK_VALUE).to(xyz.dtype)


class EncoderLayer(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, d_model, n_heads, ffn_ratio=4, activation="relu"):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_ratio, activation)

    def forward(self, x, mask=None):
        h = self.norm1(x)
        attended, weights = self.attn(h, h, h, mask)
        x = x + attended
        x = x + self.ffn(self.norm2(x))
        return x, weights


class SceneEncoder(nn.Module):
    """
    Point cloud to ``SceneTokens``.

    **Attributes:**
        - tokenizer (SetAbstraction): ``n_points -> n_tokens``.
        - masked_layer (EncoderLayer): attention restricted to ``mask_radius``.
        - downsample (SetAbstraction): ``n_tokens -> n_enc`` without moving points.
        - layers (ModuleList): unmasked encoder layers.
    """

    def __init__(
        self,
        n_feats,
        d_model,
        n_heads,
        n_tokens,
        tokenizer_radius,
        tokenizer_nsample,
        tokenizer_mlp,
        mask_radius,
        n_enc,
        downsample_radius,
        downsample_nsample,
        n_layers=2,
        ffn_ratio=4,
        activation="relu",
    ):
        super().__init__()
        self.n_tokens = n_tokens
        self.mask_radius = mask_radius
        self.tokenizer = SetAbstraction(
            n_tokens,
            tokenizer_radius,
            tokenizer_nsample,
            [3 + n_feats, *tokenizer_mlp, d_model],
            activation,
        )
        self.masked_layer = EncoderLayer(d_model, n_heads, ffn_ratio, activation)
        self.downsample = SetAbstraction(
            n_enc,
            downsample_radius,
            downsample_nsample,
            [3 + d_model, d_model, d_model],
            activation,
        )
        self.layers = nn.ModuleList(
            EncoderLayer(d_model, n_heads, ffn_ratio, activation) for _ in range(n_layers)
        )

    @classmethod
    def from_config(cls, config):
        return cls(
            n_feats=config.n_feats,
            d_model=config.d_model,
            n_heads=config.n_heads,
            n_tokens=config.n_tokens,
            tokenizer_radius=config.tokenizer_radius,
            tokenizer_nsample=config.tokenizer_nsample,
            tokenizer_mlp=config.tokenizer_mlp,
            mask_radius=config.mask_radius,
            n_enc=config.n_enc,
            downsample_radius=config.downsample_radius,
            downsample_nsample=config.downsample_nsample,
            n_layers=config.enc_layers,
            ffn_ratio=config.ffn_ratio,
            activation=config.activation,
        )

    def tokenize(self, points):
        if len(points) < self.n_tokens:
            raise ValidationFailure(
                f"Scene has {len(points)} points but the tokenizer needs {self.n_tokens}."
            )
        tokens, _ = self.tokenizer(points)
        return tokens

    def encode(self, tokens):
        mask = local_attention_mask(tokens.xyz, self.mask_radius)
        feats, _ = self.masked_layer(tokens.feats, mask)
        down, token_index = self.downsample(Points(tokens.xyz, feats))
        f_enc = down.feats
        for layer in self.layers:
            f_enc, _ = layer(f_enc)
        return SceneTokens(p_enc=down.xyz, f_enc=f_enc, token_index=token_index)

    def forward(self, points):
        return self.encode(self.tokenize(points))
