"""Building blocks shared by the architectures."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..data import NUM_CLASSES

# Batch keys a model may list in ``input_signature``.
BATCH_KEYS = ("features", "residues", "bigrams", "window", "mask", "lengths")


class SSPModel(nn.Module):
    """Base class: subclasses implement :meth:`logits`; ``forward`` returns probabilities."""

    model_id = "?"
    input_signature: tuple[str, ...] = ()

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg

    def logits(self, batch):
        raise NotImplementedError

    def forward(self, batch):
        return F.softmax(self.logits(batch), dim=-1)

    def log_probs(self, batch):
        return F.log_softmax(self.logits(batch), dim=-1)

    def regularization(self):
        """Additive penalty folded into the training loss (zero unless overridden)."""
        p = next(self.parameters())
        return p.new_zeros(())


def head(in_features):
    return nn.Linear(in_features, NUM_CLASSES)


def run_rnn(rnn, x, lengths, hx=None):
    """Run ``rnn`` over real positions only and re-pad to ``x``'s length.

    Returns ``(outputs, final_state)``; outputs at padding positions are zero.
    """
    packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
    out, state = rnn(packed, hx)
    out, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
    return out, state


def dot_attention(query, keys, values, key_mask=None):
    """Unscaled multiplicative attention. Returns ``(context, weights)``.

    query: (B, Lq, D); keys/values: (B, Lk, D); key_mask: (B, Lk) truthy for real keys.
    """
    scores = torch.bmm(query, keys.transpose(1, 2))
    if key_mask is not None:
        scores = scores.masked_fill(~key_mask.bool()[:, None, :], float("-inf"))
    weights = F.softmax(scores, dim=-1)
    return torch.bmm(weights, values), weights


def zero_padding(x, mask):
    """Zero (B, L, C) inputs at padding so no output can depend on padding content."""
    return x * mask.to(x.dtype).unsqueeze(-1)


class Conv1dSame(nn.Conv1d):
    """Length-preserving conv over (B, L, C) tensors (odd kernels only)."""

    def __init__(self, in_ch, out_ch, kernel, dilation=1):
        if kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        super().__init__(in_ch, out_ch, kernel, padding=dilation * (kernel // 2), dilation=dilation)

    def forward(self, x):
        return super().forward(x.transpose(1, 2)).transpose(1, 2)


class MaskedBatchNorm1d(nn.BatchNorm1d):
    """Batch norm on (B, C, L) whose training statistics come from real positions only.

    Padding is ~90% of a typical batch; letting it into the statistics
    shrinks the variance and blows up activations at real residues.
    """

    def forward(self, x, mask=None):
        if mask is None or not self.training:
            return super().forward(x)
        m = mask[:, None, :].to(x.dtype)
        n = m.sum()
        mean = (x * m).sum(dim=(0, 2)) / n
        centered = x - mean[None, :, None]
        var = (centered.pow(2) * m).sum(dim=(0, 2)) / n
        with torch.no_grad():
            self.num_batches_tracked += 1
            unbiased = var * n / (n - 1) if n > 1 else var
            self.running_mean.lerp_(mean, self.momentum)
            self.running_var.lerp_(unbiased, self.momentum)
        y = centered / torch.sqrt(var[None, :, None] + self.eps)
        return y * self.weight[None, :, None] + self.bias[None, :, None]


class ChannelBatchNorm(MaskedBatchNorm1d):
    """Masked batch norm over the channel axis of a (B, L, C) tensor."""

    def forward(self, x, mask=None):
        return super().forward(x.transpose(1, 2), mask).transpose(1, 2)
