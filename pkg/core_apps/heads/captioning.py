"""
Caption head and decoding.

The head is a small causal transformer over ``[prefix; token embeddings]``
with a sinusoid position table over the whole sequence. Row ``t`` of the
output predicts token ``t`` from the prefix and tokens ``0..t-1``.
"""
import logging
from dataclasses import dataclass

import torch
from torch import nn

from core_apps.common.exceptions import ValidationFailure
from core_apps.datasynth.vocabulary import EOS_ID
from core_apps.geom.encodings import sinusoid_pe
from core_apps.numerics.ops import MASK_VALUE, FeedForward, LayerNorm, Linear, MultiHeadAttention

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CaptionSequence:
    token_ids: tuple
    logprob: float

    def __len__(self):
        return len(self.token_ids)

    @property
    def score(self):
        """Log-probability per token, EOS included."""
        return self.logprob / max(len(self.token_ids), 1)


def causal_mask(length, dtype=torch.float32):
    return torch.triu(torch.full((length, length), MASK_VALUE, dtype=dtype), diagonal=1)


class CausalBlock(nn.Module):
    def __init__(self, d_model, n_heads, ffn_ratio=4, activation="relu"):
        super().__init__()
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, ffn_ratio, activation)

    def forward(self, x, mask):
        h = self.norm1(x)
        attended, _ = self.attn(h, h, h, mask)
        x = x + attended
        return x + self.ffn(self.norm2(x))


class CaptionHead(nn.Module):
    """
    **Attributes:**
        - embed (Embedding): token embeddings of width ``d_cap``.
        - blocks (ModuleList): causal transformer blocks.
        - lm_head (Linear): projection to vocabulary logits.
    """

    def __init__(self, vocab_size, d_cap, n_heads, n_layers=2, ffn_ratio=4, activation="relu"):
        super().__init__()
        self.vocab_size = vocab_size
        self.d_cap = d_cap
        self.embed = nn.Embedding(vocab_size, d_cap)
        self.blocks = nn.ModuleList(
            CausalBlock(d_cap, n_heads, ffn_ratio, activation) for _ in range(n_layers)
        )
        self.norm = LayerNorm(d_cap)
        self.lm_head = Linear(d_cap, vocab_size)

    def forward(self, prefix, ids):
        """
        Args:
            prefix (Tensor): ``[B, P, d_cap]`` prefix tokens.
            ids (Tensor): ``[B, T]`` token ids.

        Returns:
            Tensor: ``[B, T + 1, vocab]``; row ``t`` predicts token ``t``.
        """
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= self.vocab_size):
            raise ValidationFailure("Caption token id out of vocabulary range.")
        n_prefix = prefix.shape[1]
        x = torch.cat([prefix, self.embed(ids).to(prefix.dtype)], dim=1)
        length = x.shape[1]
        x = x + sinusoid_pe(torch.arange(length), self.d_cap, dtype=x.dtype)
        mask = causal_mask(length, x.dtype)
        for block in self.blocks:
            x = block(x, mask)
        return self.lm_head(self.norm(x[:, n_prefix - 1:]))


def caption_forward(head, prefix, token_ids):
    """
    Teacher-forced logits for one object.

    Args:
        prefix (Tensor): ``[P, d_cap]``.
        token_ids (Tensor): ``[T]``.

    Returns:
        Tensor: ``[T, vocab]``; row ``t`` predicts ``token_ids[t]``.
    """
    return head(prefix.unsqueeze(0), token_ids.unsqueeze(0))[0, : token_ids.shape[0]]


def sequence_logprob(head, prefix, ids):
    """Differentiable ``sum_t log p(ids[t] | prefix, ids[:t])``."""
    ids = torch.as_tensor(ids, dtype=torch.long)
    logp = torch.log_softmax(caption_forward(head, prefix, ids), dim=-1)
    return logp.gather(1, ids.unsqueeze(1)).sum()


@torch.no_grad()
def greedy_decode(head, prefix, max_len, eos_id=EOS_ID):
    """Arg-max token per step until EOS or ``max_len`` tokens."""
    ids, logprob = [], 0.0
    for _ in range(max_len):
        logits = head(prefix.unsqueeze(0), torch.tensor([ids], dtype=torch.long))[0, -1]
        logp = torch.log_softmax(logits.double(), dim=-1)
        token = int(torch.argmax(logp))
        ids.append(token)
        logprob += float(logp[token])
        if token == eos_id:
            break
    return CaptionSequence(tuple(ids), logprob)


@torch.no_grad()
def beam_search(head, prefix, beam_k, max_len, eos_id=EOS_ID):
    """
    Width-``beam_k`` search over cumulative log-probability.

    At every step the best ``beam_k - len(finished)`` expansions of all live
    beams are kept; expansions ending in EOS move to ``finished``. Beams still
    live at ``max_len`` are finished as they are. Results are ranked by
    length-normalized log-probability.

    Returns:
        list[CaptionSequence]: at most ``beam_k`` sequences, best first.
    """
    if beam_k < 1:
        raise ValidationFailure(f"beam size must be >= 1, got {beam_k}.")
    live = [((), 0.0)]
    finished = []
    for _ in range(max_len):
        width = beam_k - len(finished)
        if width <= 0 or not live:
            break
        ids = torch.tensor([list(seq) for seq, _ in live], dtype=torch.long)
        logits = head(prefix.unsqueeze(0).expand(len(live), -1, -1), ids)[:, -1]
        logp = torch.log_softmax(logits.double(), dim=-1)
        totals = torch.tensor([score for _, score in live], dtype=torch.float64).unsqueeze(1) + logp
        order = torch.sort(totals.reshape(-1), descending=True, stable=True).indices[:width]
        vocab = logp.shape[1]
        next_live = []
        for flat in order.tolist():
            beam, token = divmod(flat, vocab)
            candidate = (live[beam][0] + (token,), float(totals[beam, token]))
            (finished if token == eos_id else next_live).append(candidate)
        live = next_live
    finished.extend(live)
    ranked = sorted(
        (CaptionSequence(seq, score) for seq, score in finished),
        key=lambda c: c.score,
        reverse=True,
    )
    logger.debug("beam search: %d hypotheses, best score %.4f", len(ranked), ranked[0].score)
    return ranked[:beam_k]
