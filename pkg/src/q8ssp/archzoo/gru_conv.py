"""Model C: multi-scale convolutions, a concatenating conv cascade, one wide bidirectional GRU."""

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..featurize import ONEHOT_SLICE, PROFILE_SLICE
from .layers import ChannelBatchNorm, Conv1dSame, SSPModel, head, run_rnn, zero_padding


class CascadeStage(nn.Module):
    """conv -> ReLU -> batch norm -> dropout, output appended to the input."""

    def __init__(self, in_ch, filters, kernel, dropout):
        super().__init__()
        self.conv = Conv1dSame(in_ch, filters, kernel)
        self.norm = ChannelBatchNorm(filters)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask=None):
        return torch.cat([x, self.drop(self.norm(torch.relu(self.conv(x)), mask))], dim=-1)


class GRUConv(SSPModel):
    model_id = "C"
    input_signature = ("residues", "features", "lengths", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.embed = nn.Embedding(22, cfg.embedding_dim)
        c_in = 22 + cfg.embedding_dim + 22
        f = cfg["branch_filters"]
        self.branches = nn.ModuleList(Conv1dSame(c_in, f, k) for k in cfg["branch_kernels"])
        width = f * len(cfg["branch_kernels"])
        stages = []
        for _ in range(cfg["cascade_depth"]):
            stages.append(CascadeStage(width, cfg["cascade_filters"], cfg["cascade_kernel"], cfg["dropout"]))
            width += cfg["cascade_filters"]
        self.cascade = nn.ModuleList(stages)
        self.gru = nn.GRU(width, cfg["gru_units"], batch_first=True, bidirectional=True)
        fc, prev = [], 2 * cfg["gru_units"]
        for units in cfg["fc_units"]:
            fc += [nn.Linear(prev, units), nn.ReLU()]
            prev = units
        self.fc = nn.Sequential(*fc)
        self.out = head(prev)
        self.recurrent_l2 = float(cfg["recurrent_l2"])

    def logits(self, batch):
        feats = batch["features"]
        x = torch.cat([feats[..., ONEHOT_SLICE], self.embed(batch["residues"]), feats[..., PROFILE_SLICE]], dim=-1)
        x = zero_padding(x, batch["mask"])
        x = torch.relu(torch.cat([conv(x) for conv in self.branches], dim=-1))
        for stage in self.cascade:
            x = stage(x, batch["mask"])
        x, _ = run_rnn(self.gru, x, batch["lengths"])
        return self.out(self.fc(x))

    def regularization(self):
        penalty = self.gru.weight_hh_l0.pow(2).sum() + self.gru.weight_hh_l0_reverse.pow(2).sum()
        return self.recurrent_l2 * penalty


def build_gru_conv(cfg):
    if cfg.model_id != "C":
        raise ConfigError(f"build_gru_conv needs model_id C, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return GRUConv(cfg)
