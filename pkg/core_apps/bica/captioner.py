"""
The full scene captioner: encoder, query generators, decoders, localization
heads, contextual attention and caption head.
"""
from dataclasses import dataclass
from typing import Optional

from torch import nn

from core_apps.bica.attention import CaptionPrefix, ContextualAttention
from core_apps.decoders.transformer import QueryDecoder, decode_context, decode_instance
from core_apps.encoder.network import SceneEncoder, SceneTokens
from core_apps.heads.captioning import CaptionHead
from core_apps.heads.localization import LocalizationHeads, localize
from core_apps.queries.generators import (
    ContextQueryGenerator,
    InstanceQueryGenerator,
    QuerySet,
    VoteOffsets,
)

DETECTOR_MODULES = ("encoder", "instance_queries", "instance_decoder", "heads")
CAPTIONER_MODULES = ("context_queries", "context_decoder", "contextual", "caption_head")


@dataclass
class SceneOutputs:
    """
    **Attributes:**
        - tokens (SceneTokens): encoded scene.
        - instance (QuerySet): instance queries at vote-shifted positions.
        - votes (VoteOffsets): offsets of every encoded token.
        - predictions (list[BoxPrediction]): one per instance decoder layer.
        - context (QuerySet, optional): context queries.
        - prefix (CaptionPrefix, optional): caption prefix of every instance query.
    """

    tokens: SceneTokens
    instance: QuerySet
    votes: VoteOffsets
    predictions: list
    context: Optional[QuerySet] = None
    prefix: Optional[CaptionPrefix] = None

    @property
    def final(self):
        return self.predictions[-1]


class BiCACaptioner(nn.Module):
    """
    Jointly localizes and captions every object of one scene.

    Parameters split into a detector part (encoder, instance query generator,
    instance decoder, localization heads) and a captioner part trained only
    through caption losses.
    """

    def __init__(self, config, vocab_size):
        super().__init__()
        self.config = config
        d = config.d_model
        self.encoder = SceneEncoder.from_config(config)
        self.instance_queries = InstanceQueryGenerator(
            d, config.n_instance, config.instance_radius, config.instance_nsample, config.activation
        )
        self.context_queries = ContextQueryGenerator(
            d,
            config.n_context,
            config.context_seeds,
            config.context_radius,
            config.context_nsample,
            config.activation,
        )
        self.instance_decoder = self._decoder(config)
        self.context_decoder = self._decoder(config)
        self.heads = LocalizationHeads(
            d, config.n_class, config.size_scale, config.activation, config.iou_head
        )
        self.contextual = ContextualAttention(
            d, config.d_cap, config.variant, config.knn_k, config.prefix_tokens
        )
        self.caption_head = CaptionHead(
            vocab_size,
            config.d_cap,
            config.cap_heads,
            config.cap_layers,
            config.ffn_ratio,
            config.activation,
        )

    @staticmethod
    def _decoder(config):
        return QueryDecoder(
            config.d_model,
            config.n_heads,
            config.dec_layers,
            config.ffn_ratio,
            config.activation,
            config.fourier_sigma,
        )

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def _named(self, modules):
        return [
            (f"{module}.{name}", param)
            for module in modules
            for name, param in getattr(self, module).named_parameters()
        ]

    def detector_parameters(self):
        return self._named(DETECTOR_MODULES)

    def captioner_parameters(self):
        return self._named(CAPTIONER_MODULES)

    def freeze_detector(self, frozen=True):
        for _, param in self.detector_parameters():
            param.requires_grad_(not frozen)

    def detect(self, points):
        tokens = self.encoder(points.to(self.dtype))
        instance, votes = self.instance_queries(tokens)
        vo_layers = decode_instance(self.instance_decoder, instance, tokens)
        predictions = localize(self.heads, vo_layers, instance.positions)
        return SceneOutputs(tokens, instance, votes, predictions), vo_layers[-1]

    def forward(self, points, with_captions=True):
        """
        Args:
            points (Points): scene point cloud.
            with_captions (bool): skip the context branch and prefix when false.

        Returns:
            SceneOutputs
        """
        outputs, vo = self.detect(points)
        if not with_captions:
            return outputs
        outputs.context = self.context_queries(outputs.tokens)
        vc = decode_context(self.context_decoder, outputs.context, outputs.tokens)
        outputs.prefix = self.contextual(
            vo, vc, outputs.instance.positions, outputs.context.positions
        )
        return outputs
