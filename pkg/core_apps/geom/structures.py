"""
Point clouds and axis-aligned boxes.
"""
import math
from dataclasses import dataclass
from typing import Optional

import torch

from core_apps.common.exceptions import ShapeError, ValidationFailure


@dataclass
class Points:
    """
    A point set with optional per-point features.

    **Attributes:**
        - xyz (Tensor): ``[n, 3]`` coordinates in scene units.
        - feats (Tensor, optional): ``[n, F]`` per-point features.
    """

    xyz: torch.Tensor
    feats: Optional[torch.Tensor] = None

    def __post_init__(self):
        if self.xyz.dim() != 2 or self.xyz.shape[-1] != 3 or self.xyz.shape[0] < 1:
            raise ShapeError(f"Points need a non-empty [n, 3] xyz, got {tuple(self.xyz.shape)}.")
        if self.feats is not None and self.feats.shape[0] != self.xyz.shape[0]:
            raise ShapeError("Point features and coordinates disagree on the point count.")

    def __len__(self):
        return self.xyz.shape[0]

    @property
    def n_feats(self):
        return 0 if self.feats is None else self.feats.shape[-1]

    def to(self, dtype):
        return Points(self.xyz.to(dtype), None if self.feats is None else self.feats.to(dtype))

    def double(self):
        return self.to(torch.float64)


@dataclass(frozen=True)
class Box3D:
    """
    Axis-aligned box given by its center and full extents.

    Example:
        >>> Box3D((0.0, 0.0, 0.5), (1.0, 1.0, 1.0), 3).volume
        1.0
    """

    center: tuple
    size: tuple
    class_id: int = 0

    def __post_init__(self):
        if len(self.center) != 3 or len(self.size) != 3:
            raise ShapeError("Box3D center and size need three components.")
        if not all(math.isfinite(c) for c in self.center):
            raise ValidationFailure(f"Box3D center must be finite, got {self.center}.")
        if not all(s > 0 and math.isfinite(s) for s in self.size):
            raise ValidationFailure(f"Box3D size must be positive and finite, got {self.size}.")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        object.__setattr__(self, "class_id", int(self.class_id))

    @property
    def volume(self):
        return self.size[0] * self.size[1] * self.size[2]

    @property
    def minimum(self):
        return tuple(c - s / 2 for c, s in zip(self.center, self.size))

    @property
    def maximum(self):
        return tuple(c + s / 2 for c, s in zip(self.center, self.size))

    def contains(self, point, margin=0.0):
        return all(
            lo - margin <= p <= hi + margin
            for p, lo, hi in zip(point, self.minimum, self.maximum)
        )

    def as_tensor(self, dtype=torch.float32):
        """``[6]`` tensor ``(cx, cy, cz, sx, sy, sz)``."""
        return torch.tensor(self.center + self.size, dtype=dtype)

    @classmethod
    def from_tensor(cls, row, class_id=0):
        values = [float(v) for v in row]
        return cls(tuple(values[:3]), tuple(values[3:6]), class_id)


def boxes_to_tensor(boxes, dtype=torch.float32):
    """Stack boxes into ``[N, 6]``; an empty list gives ``[0, 6]``."""
    if not boxes:
        return torch.zeros(0, 6, dtype=dtype)
    return torch.stack([b.as_tensor(dtype) for b in boxes])
