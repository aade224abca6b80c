"""Model D: dense and recurrent bigram branches feeding a dilated residual conv stack."""

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..featurize import BIGRAM_VOCAB, PROFILE_SLICE
from .layers import Conv1dSame, SSPModel, head, run_rnn, zero_padding


class ResidualBlock(nn.Module):
    """x + drop(relu(conv(drop(relu(conv(x)))))) with symmetric dilated padding."""

    def __init__(self, channels, kernel, dilation, dropout):
        super().__init__()
        self.conv1 = Conv1dSame(channels, channels, kernel, dilation)
        self.conv2 = Conv1dSame(channels, channels, kernel, dilation)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        h = self.drop(torch.relu(self.conv1(x)))
        h = self.drop(torch.relu(self.conv2(h)))
        return x + h


class TCNStack(nn.Sequential):
    def __init__(self, channels, blocks, kernel, dropout):
        self.dilations = [2**i for i in range(blocks)]
        self.kernel = kernel
        super().__init__(*(ResidualBlock(channels, kernel, d, dropout) for d in self.dilations))

    @property
    def receptive_field(self):
        return 2 * sum(self.dilations) * (self.kernel - 1) + 1


class TCNModel(SSPModel):
    model_id = "D"
    input_signature = ("bigrams", "features", "lengths", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        e = cfg.embedding_dim
        self.embed_dense = nn.Embedding(BIGRAM_VOCAB, e)
        self.embed_rnn = self.embed_dense if cfg["share_embeddings"] else nn.Embedding(BIGRAM_VOCAB, e)
        drop = cfg["dropout"]
        self.branch_dense = nn.Sequential(nn.Linear(e + 22, cfg["branch_units"]), nn.ReLU(), nn.Dropout(drop))
        self.branch_gru = nn.GRU(e + 22, cfg["gru_units"], num_layers=cfg["gru_layers"],
                                 batch_first=True, bidirectional=True)
        merged = cfg["branch_units"] + 2 * cfg["gru_units"]
        ch = cfg["tcn_filters"]
        self.merge = nn.Sequential(nn.Linear(merged, ch), nn.ReLU(), nn.Dropout(drop))
        self.tcn = TCNStack(ch, cfg["tcn_blocks"], cfg["tcn_kernel"], drop)
        self.out = head(ch)

    def logits(self, batch):
        profile = batch["features"][..., PROFILE_SLICE]
        x1 = zero_padding(torch.cat([self.embed_dense(batch["bigrams"]), profile], dim=-1), batch["mask"])
        x2 = torch.cat([self.embed_rnn(batch["bigrams"]), profile], dim=-1)
        rnn_out, _ = run_rnn(self.branch_gru, x2, batch["lengths"])
        x = self.merge(torch.cat([self.branch_dense(x1), rnn_out], dim=-1))
        return self.out(self.tcn(x))


def build_tcn(cfg):
    if cfg.model_id != "D":
        raise ConfigError(f"build_tcn needs model_id D, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return TCNModel(cfg)
