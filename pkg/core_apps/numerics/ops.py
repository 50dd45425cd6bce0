"""
Differentiable primitives and the building blocks made from them.

Tensors are torch tensors; reverse-mode accumulation is torch autograd.
Weights are stored ``[din, dout]`` so that ``y = xW + b`` reads as written.
Every block accepts any number of leading batch dimensions.
"""
import logging
import math

import torch
import torch.nn.functional as F
from torch import nn

from core_apps.common.exceptions import DivergenceError, ShapeError

logger = logging.getLogger(__name__)

# Additive mask value for disallowed attention entries.
MASK_VALUE = -1e9

ACTIVATIONS = {
    "relu": nn.ReLU,
    "gelu": nn.GELU,
}


def assert_finite(tensor, what):
    if not torch.isfinite(tensor).all():
        raise DivergenceError(f"Non-finite values in {what}.", {"where": what})
    return tensor


def linear(x, weight, bias=None):
    """
    Affine map ``y = xW + b``.

    Args:
        x (Tensor): ``[..., din]`` input.
        weight (Tensor): ``[din, dout]`` weight.
        bias (Tensor, optional): ``[dout]`` bias.

    Returns:
        Tensor: ``[..., dout]``.

    Raises:
        ShapeError: if the widths do not conform.
    """
    if weight.dim() != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"linear: input width {x.shape[-1]} does not match weight {tuple(weight.shape)}."
        )
    y = x @ weight
    if bias is None:
        return y
    if tuple(bias.shape) != (weight.shape[1],):
        raise ShapeError(
            f"linear: bias {tuple(bias.shape)} does not match output width {weight.shape[1]}."
        )
    return y + bias


def layer_norm(x, gamma, beta, eps=1e-5):
    """Per-row zero mean / unit variance followed by ``gamma * x + beta``."""
    d = x.shape[-1]
    if d < 1 or tuple(gamma.shape) != (d,) or tuple(beta.shape) != (d,):
        raise ShapeError(f"layer_norm: affine parameters do not match width {d}.")
    return F.layer_norm(x, (d,), gamma, beta, eps)


def softmax(x, dim=-1):
    """Softmax along ``dim``; torch subtracts the running max internally."""
    return torch.softmax(x, dim=dim)


def scaled_dot_product_attention(q, k, v, n_heads, mask=None):
    """
    Multi-head scaled dot-product attention without projections.

    Args:
        q (Tensor): ``[..., nq, d]`` queries.
        k (Tensor): ``[..., nk, d]`` keys.
        v (Tensor): ``[..., nk, d]`` values.
        n_heads (int): number of heads; must divide ``d``.
        mask (Tensor, optional): additive mask broadcastable to ``[..., nq, nk]``,
            ``MASK_VALUE`` for disallowed entries.

    Returns:
        tuple: ``(out [..., nq, d], weights [..., heads, nq, nk])``.
            A row whose keys are all masked gets uniform weights.
    """
    d = q.shape[-1]
    if d % n_heads != 0:
        raise ShapeError(f"attention: width {d} is not divisible by {n_heads} heads.")
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention: key/value shapes do not conform to the queries.")
    head_dim = d // n_heads

    def split(t):
        return t.reshape(*t.shape[:-1], n_heads, head_dim).transpose(-2, -3)

    scores = split(q) @ split(k).transpose(-1, -2) / math.sqrt(head_dim)
    if mask is not None:
        mask = mask.to(scores.dtype).unsqueeze(-3)
        scores = scores + mask
        blocked = (mask <= MASK_VALUE / 2).all(dim=-1, keepdim=True)
        if bool(blocked.any()):
            logger.warning(
                "attention: %d fully masked query rows get uniform weights",
                int(blocked.sum()),
            )
            scores = scores.masked_fill(blocked, 0.0)
    weights = softmax(scores, dim=-1)
    out = weights @ split(v)
    out = out.transpose(-2, -3).reshape(*q.shape[:-1], d)
    return out, weights


class Linear(nn.Module):
    """
    Affine layer with ``[din, dout]`` weights.

    Weights start uniform in ``(-1/sqrt(din), 1/sqrt(din))``, biases at zero.
    """

    def __init__(self, in_features, out_features, bias=True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = nn.Parameter(torch.empty(in_features, out_features))
        self.bias = nn.Parameter(torch.zeros(out_features)) if bias else None
        self.reset_parameters()

    def reset_parameters(self):
        bound = 1.0 / math.sqrt(self.in_features)
        nn.init.uniform_(self.weight, -bound, bound)
        if self.bias is not None:
            nn.init.zeros_(self.bias)

    def forward(self, x):
        return linear(x, self.weight, self.bias)

    def extra_repr(self):
        return f"in_features={self.in_features}, out_features={self.out_features}"


class LayerNorm(nn.Module):
    def __init__(self, d, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(d))
        self.bias = nn.Parameter(torch.zeros(d))

    def forward(self, x):
        return layer_norm(x, self.weight, self.bias, self.eps)


class MultiHeadAttention(nn.Module):
    """
    Projected multi-head attention.

    **Attributes:**
        - q_proj, k_proj, v_proj: input projections.
        - out_proj: projection applied after the heads are concatenated.
    """

    def __init__(self, d_model, n_heads):
        super().__init__()
        if d_model % n_heads != 0:
            raise ShapeError(f"d_model {d_model} is not divisible by {n_heads} heads.")
        self.n_heads = n_heads
        self.q_proj = Linear(d_model, d_model)
        self.k_proj = Linear(d_model, d_model)
        self.v_proj = Linear(d_model, d_model)
        self.out_proj = Linear(d_model, d_model)

    def forward(self, query, key, value, mask=None):
        out, weights = scaled_dot_product_attention(
            self.q_proj(query),
            self.k_proj(key),
            self.v_proj(value),
            self.n_heads,
            mask,
        )
        return self.out_proj(out), weights


class MLP(nn.Module):
    """
    Stack of ``Linear`` layers with an activation between them.

    Args:
        dims (list[int]): ``[din, h1, ..., dout]``; a single entry is the identity.
        activation (str): key of ``ACTIVATIONS``.
        final_activation (bool): also apply the activation after the last layer.
    """

    def __init__(self, dims, activation="relu", final_activation=False):
        super().__init__()
        layers = []
        for idx, (din, dout) in enumerate(zip(dims[:-1], dims[1:])):
            layers.append(Linear(din, dout))
            if idx < len(dims) - 2 or final_activation:
                layers.append(ACTIVATIONS[activation]())
        self.layers = nn.Sequential(*layers)
        self.out_features = dims[-1]

    def forward(self, x):
        return self.layers(x)

    @property
    def last(self):
        """The output ``Linear``, or ``None`` for the identity."""
        linears = [m for m in self.layers if isinstance(m, Linear)]
        return linears[-1] if linears else None


class FeedForward(MLP):
    """Transformer position-wise block ``d -> ratio*d -> d``."""

    def __init__(self, d_model, ratio=4, activation="relu"):
        super().__init__([d_model, ratio * d_model, d_model], activation)


def backward(loss, named_parameters=None):
    """
    Accumulate ``d loss / d param`` into every reachable parameter.

    Args:
        loss (Tensor): scalar loss.
        named_parameters (iterable, optional): ``(name, Parameter)`` pairs to report.

    Returns:
        dict: name -> gradient; parameters the loss does not reach get zeros.

    Raises:
        ShapeError: the loss is not a scalar.
        DivergenceError: the loss is not finite.
    """
    if loss.dim() != 0:
        raise ShapeError(f"backward expects a scalar loss, got shape {tuple(loss.shape)}.")
    if not torch.isfinite(loss):
        raise DivergenceError("Loss is not finite.", {"loss": float(loss.detach())})
    loss.backward()
    grads = {}
    for name, param in named_parameters or ():
        grads[name] = param.grad if param.grad is not None else torch.zeros_like(param)
    return grads
