"""
Query decoders: self-attention among queries, cross-attention to the encoded
scene and a feed-forward block, with Fourier encodings of xyz added to the
attention queries and keys of every layer.
"""
from torch import nn

from core_apps.geom.encodings import FourierEncoding
from core_apps.numerics.ops import FeedForward, LayerNorm, MultiHeadAttention


class DecoderLayer(nn.Module):
    def __init__(self, d_model, n_heads, ffn_ratio=4, activation="relu"):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.norm3 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_ratio, activation)

    def forward(self, x, query_pos, memory, memory_pos):
        h = self.norm1(x)
        attended, _ = self.self_attn(h + query_pos, h + query_pos, h)
        x = x + attended
        h = self.norm2(x)
        attended, weights = self.cross_attn(h + query_pos, memory + memory_pos, memory)
        x = x + attended
        x = x + self.ffn(self.norm3(x))
        return x, weights


class QueryDecoder(nn.Module):
    """
    Stack of ``DecoderLayer`` with a shared output norm.

    **Attributes:**
        - position (FourierEncoding): xyz encoding owned by this decoder.
        - layers (ModuleList): decoder layers.
        - norm (LayerNorm): applied to every returned layer output.
    """

    def __init__(self, d_model, n_heads, n_layers, ffn_ratio=4, activation="relu", fourier_sigma=1.0):
        super().__init__()
        self.position = FourierEncoding(d_model, fourier_sigma)
        self.layers = nn.ModuleList(
            DecoderLayer(d_model, n_heads, ffn_ratio, activation) for _ in range(n_layers)
        )
        self.norm = LayerNorm(d_model)

    def forward(self, queries, st, return_weights=False):
        """
        Returns:
            list[Tensor]: ``[nq, d_model]`` output of every layer. With
            ``return_weights`` a pair ``(outputs, cross_weights)`` where
            ``cross_weights`` holds each layer's ``[heads, nq, n]`` attention map.
        """
        query_pos = self.position(queries.positions)
        memory_pos = self.position(st.p_enc)
        x = queries.feats
        outputs, cross_weights = [], []
        for layer in self.layers:
            x, weights = layer(x, query_pos, st.f_enc, memory_pos)
            outputs.append(self.norm(x))
            cross_weights.append(weights)
        if return_weights:
            return outputs, cross_weights
        return outputs


def decode_instance(decoder, queries, st):
    """Every layer's instance features; each one is supervised."""
    return decoder(queries, st)


def decode_context(decoder, queries, st):
    """Final-layer context features only."""
    return decoder(queries, st)[-1]
