"""Model E: window-mix features, parallel convolutions, three stacked bidirectional GRUs."""

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..featurize import ONEHOT_SLICE, PROFILE_SLICE
from .layers import ChannelBatchNorm, Conv1dSame, SSPModel, head, run_rnn, zero_padding

INPUT_WIDTH = 22 + 22 + 22 + 22


class BiGRUWindowMix(SSPModel):
    model_id = "E"
    input_signature = ("window", "features", "lengths", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        self.dense = nn.Sequential(nn.Linear(INPUT_WIDTH, cfg["dense_units"]), nn.ReLU())
        f = cfg["conv_filters"]
        self.convs = nn.ModuleList(Conv1dSame(cfg["dense_units"], f, k) for k in cfg["conv_kernels"])
        self.norms = nn.ModuleList(ChannelBatchNorm(f) for _ in cfg["conv_kernels"])
        conv_width = f * len(cfg["conv_kernels"])
        units = cfg["gru_units"]
        self.grus = nn.ModuleList(
            nn.GRU(conv_width if i == 0 else 2 * units, units, batch_first=True, bidirectional=True)
            for i in range(cfg["gru_layers"])
        )
        width = conv_width + 2 * units * cfg["gru_layers"]
        self.fc = nn.Sequential(nn.Linear(width, cfg["fc_units"]), nn.ReLU(), nn.Dropout(cfg["dropout"]))
        self.out = head(cfg["fc_units"])

    def inputs(self, batch):
        feats = batch["features"]
        return torch.cat([batch["window"], feats[..., ONEHOT_SLICE], feats[..., PROFILE_SLICE]], dim=-1)

    def logits(self, batch):
        x = self.dense(zero_padding(self.inputs(batch), batch["mask"]))
        mask = batch["mask"]
        conv = torch.cat([torch.relu(norm(c(x), mask)) for c, norm in zip(self.convs, self.norms)], dim=-1)
        h, rnn_outs = conv, []
        for gru in self.grus:
            h, _ = run_rnn(gru, h, batch["lengths"])
            rnn_outs.append(h)
        return self.out(self.fc(torch.cat(rnn_outs + [conv], dim=-1)))


def build_bigru_windowmix(cfg):
    if cfg.model_id != "E":
        raise ConfigError(f"build_bigru_windowmix needs model_id E, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return BiGRUWindowMix(cfg)
