"""Model B: 1D U-Net over residue embeddings and profiles."""

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError
from ..featurize import PROFILE_SLICE
from .layers import MaskedBatchNorm1d, SSPModel, head, zero_padding


class ConvBlock(nn.Module):
    """Two (conv, batch norm, ReLU) stages then dropout, channels-first."""

    def __init__(self, in_ch, out_ch, kernel, dropout):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Conv1d(c, out_ch, kernel, padding=kernel // 2) for c in (in_ch, out_ch)
        )
        self.norms = nn.ModuleList(MaskedBatchNorm1d(out_ch) for _ in range(2))
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask):
        for conv, norm in zip(self.convs, self.norms):
            x = torch.relu(norm(conv(x), mask))
        return self.drop(x)


class UNet1D(SSPModel):
    model_id = "B"
    input_signature = ("residues", "features", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        depth, width, k, pool = cfg["depth"], cfg["base_width"], cfg["kernel"], cfg["pool"]
        drop = cfg["dropout"]
        self.depth, self.pool = depth, pool
        self.embed = nn.Embedding(22, cfg.embedding_dim)
        widths = [width * 2**i for i in range(depth + 1)]
        self.down = nn.ModuleList()
        c_in = cfg.embedding_dim + 22
        for w in widths[:-1]:
            self.down.append(ConvBlock(c_in, w, k, drop))
            c_in = w
        self.bottom = ConvBlock(c_in, widths[-1], k, drop)
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for w_hi, w_lo in zip(widths[:0:-1], widths[-2::-1]):
            self.up.append(nn.ConvTranspose1d(w_hi, w_lo, pool, stride=pool))
            self.dec.append(ConvBlock(2 * w_lo, w_lo, k, drop))
        self.out = head(widths[0])

    def logits(self, batch):
        x = torch.cat([self.embed(batch["residues"]), batch["features"][..., PROFILE_SLICE]], dim=-1)
        x = zero_padding(x, batch["mask"])
        L = x.shape[1]
        unit = self.pool**self.depth
        padded = -(-L // unit) * unit
        x = F.pad(x.transpose(1, 2), (0, padded - L))
        mask = F.pad(batch["mask"].to(x.dtype), (0, padded - L))
        skips = []
        for block in self.down:
            x = block(x, mask)
            skips.append((x, mask))
            x = F.max_pool1d(x, self.pool)
            mask = F.max_pool1d(mask[:, None], self.pool)[:, 0]
        x = self.bottom(x, mask)
        for up, dec, (skip, mask) in zip(self.up, self.dec, reversed(skips)):
            x = dec(torch.cat([up(x), skip], dim=1), mask)
        return self.out(x[:, :, :L].transpose(1, 2))


def build_unet(cfg):
    if cfg.model_id != "B":
        raise ConfigError(f"build_unet needs model_id B, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return UNet1D(cfg)
