"""
Bi-directional contextual attention.

O4C (objects for context) lets every instance feature attend over the context
features; C4O (contexts for object) lets the resulting object-aware context
attend back over the instance features. Each output is scaled per channel by
a learnable gate. The caption prefix is built from the concatenation
``[Vo, Vca, Voa]``.
"""
from dataclasses import dataclass

import torch
from torch import nn

from core_apps.common.exceptions import ShapeError, ValidationFailure
from core_apps.geom.sampling import knn
from core_apps.numerics.ops import Linear, scaled_dot_product_attention

VARIANTS = ("vo", "vo+knn", "vo+o4c", "full")


@dataclass
class CaptionPrefix:
    """
    **Attributes:**
        - va (Tensor): ``[n, 3 * d_model]`` concatenated object features.
        - tokens (Tensor): ``[n, prefix_tokens, d_cap]`` projected prefix fed to the caption head.
    """

    va: torch.Tensor
    tokens: torch.Tensor

    def __len__(self):
        return self.tokens.shape[0]


class GatedAttention(nn.Module):
    """Single-head attention without output projection, gated per channel."""

    def __init__(self, d_model):
        super().__init__()
        self.q_proj = Linear(d_model, d_model)
        self.k_proj = Linear(d_model, d_model)
        self.v_proj = Linear(d_model, d_model)
        self.gate = nn.Parameter(torch.ones(d_model))

    def forward(self, query, context, return_weights=False):
        out, weights = scaled_dot_product_attention(
            self.q_proj(query), self.k_proj(context), self.v_proj(context), n_heads=1
        )
        if return_weights:
            return self.gate * out, weights
        return self.gate * out


def o4c(vo, vc, attention, return_weights=False):
    """Object-aware context ``Vca [n_o, d]``, with the ``[1, n_o, n_c]`` map when asked."""
    if vo.shape[-1] != vc.shape[-1]:
        raise ShapeError("o4c: instance and context widths differ.")
    return attention(vo, vc, return_weights)


def c4o(vca, vo, attention, return_weights=False):
    """Context-aware object ``Voa [n_o, d]``, with the ``[1, n_o, n_o]`` map when asked."""
    if vca.shape != vo.shape:
        raise ShapeError("c4o: object-aware context and instance features differ in shape.")
    return attention(vca, vo, return_weights)


def knn_context(vo, vc, positions, context_positions, k=16):
    """
    Mean of the ``k`` context features nearest to each query position.

    Raises:
        ValidationFailure: ``k`` exceeds the number of context features.
    """
    if k > vc.shape[0]:
        raise ValidationFailure(f"knn_context: K={k} exceeds {vc.shape[0]} context features.")
    if positions.shape[0] != vo.shape[0]:
        raise ShapeError("knn_context: one position per instance feature is required.")
    return vc[knn(positions, context_positions, k)].mean(dim=1)


class PrefixProjection(nn.Module):
    """``[n, 3d]`` to one ``d_cap`` token, or to three tokens (one per part)."""

    def __init__(self, d_model, d_cap, prefix_tokens=1):
        super().__init__()
        self.d_model = d_model
        self.prefix_tokens = prefix_tokens
        if prefix_tokens == 1:
            self.proj = Linear(3 * d_model, d_cap)
        else:
            self.parts = nn.ModuleList(Linear(d_model, d_cap) for _ in range(3))

    def forward(self, va):
        if self.prefix_tokens == 1:
            return self.proj(va).unsqueeze(1)
        chunks = va.split(self.d_model, dim=-1)
        return torch.stack([proj(chunk) for proj, chunk in zip(self.parts, chunks)], dim=1)


def assemble_prefix(vo, vca, voa, projection):
    va = torch.cat([vo, vca, voa], dim=-1)
    return CaptionPrefix(va, projection(va))


class ContextualAttention(nn.Module):
    """
    O4C, C4O and the prefix projection, arranged by ``variant``.

    Variants: ``vo`` (instance features only), ``vo+knn`` (KNN context mean in
    place of O4C), ``vo+o4c`` and ``full``. Unused parts of ``Va`` are zeros so
    its width is always ``3 * d_model``.
    """

    def __init__(self, d_model, d_cap, variant="full", knn_k=16, prefix_tokens=1):
        if variant not in VARIANTS:
            raise ValidationFailure(f"Unknown variant {variant!r}; choose from {', '.join(VARIANTS)}.")
        super().__init__()
        self.variant = variant
        self.knn_k = knn_k
        self.o4c = GatedAttention(d_model)
        self.c4o = GatedAttention(d_model)
        self.prefix = PrefixProjection(d_model, d_cap, prefix_tokens)

    @property
    def gamma(self):
        return self.o4c.gate

    @property
    def lambda_(self):
        return self.c4o.gate

    def forward(self, vo, vc, positions, context_positions):
        zeros = torch.zeros_like(vo)
        vca, voa = zeros, zeros
        if self.variant == "vo+knn":
            vca = knn_context(vo, vc, positions, context_positions, self.knn_k)
        elif self.variant in ("vo+o4c", "full"):
            vca = o4c(vo, vc, self.o4c)
            if self.variant == "full":
                voa = c4o(vca, vo, self.c4o)
        return assemble_prefix(vo, vca, voa, self.prefix)
