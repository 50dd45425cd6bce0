"""
Positional encodings.
"""
import math

import torch
from torch import nn

from core_apps.common.exceptions import ShapeError


def fourier_pe(xyz, gauss_B):
    """``[sin(2π xyz·B), cos(2π xyz·B)]`` for ``xyz [..., 3]`` and ``B [3, d/2]``."""
    proj = 2 * math.pi * (xyz @ gauss_B)
    return torch.cat([torch.sin(proj), torch.cos(proj)], dim=-1)


class FourierEncoding(nn.Module):
    """
    Random Fourier features of xyz.

    ``gauss_B`` is drawn once from ``N(0, sigma^2)`` and stored as a buffer so it
    is checkpointed but never trained.
    """

    def __init__(self, d_model, sigma=1.0):
        super().__init__()
        if d_model % 2:
            raise ShapeError(f"Fourier encoding width must be even, got {d_model}.")
        self.register_buffer("gauss_B", torch.randn(3, d_model // 2) * sigma)

    def forward(self, xyz):
        return fourier_pe(xyz, self.gauss_B.to(xyz.dtype))


def sinusoid_pe(positions, d, base=10000.0, dtype=torch.float32):
    """
    Transformer sinusoid table.

    Column ``2i`` is ``sin(t / base^(2i/d))`` and column ``2i+1`` the matching
    cosine, so ``t = 0`` gives ``[0, 1, 0, 1, ...]``.

    Args:
        positions (int | Tensor): a position or ``[T]`` positions.
        d (int): encoding width.

    Returns:
        Tensor: ``[d]`` for a scalar position, otherwise ``[T, d]``.
    """
    scalar = not torch.is_tensor(positions) or positions.dim() == 0
    t = torch.as_tensor(positions, dtype=torch.float64).reshape(-1, 1)
    exponent = torch.arange(0, d, 2, dtype=torch.float64) / d
    angles = t / torch.pow(torch.tensor(base, dtype=torch.float64), exponent)
    pe = torch.zeros(t.shape[0], d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angles)
    pe[:, 1::2] = torch.cos(angles)[:, : d // 2]
    pe = pe.to(dtype)
    return pe[0] if scalar else pe
