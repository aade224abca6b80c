"""Model F: two rounds of parallel convolutions with input skips, then a bidirectional LSTM."""

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..featurize import NUM_FEATURES
from .layers import Conv1dSame, SSPModel, head, run_rnn, zero_padding


class ConvBiLSTM(SSPModel):
    model_id = "F"
    input_signature = ("features", "lengths", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        f = cfg["conv_filters"]
        self.first = nn.ModuleList(Conv1dSame(NUM_FEATURES, f, k) for k in cfg["first_kernels"])
        w1 = NUM_FEATURES + f * len(cfg["first_kernels"])
        self.second = nn.ModuleList(Conv1dSame(w1, f, k) for k in cfg["second_kernels"])
        self.width = w1 + f * len(cfg["second_kernels"])
        self.lstm = nn.LSTM(self.width, cfg["lstm_units"], batch_first=True, bidirectional=True)
        self.drop = nn.Dropout(cfg["dropout"])
        self.out = head(2 * cfg["lstm_units"])
        # ablation switch for tests: zero the skip paths but keep shapes
        self.use_skips = True

    def _skip(self, x):
        return x if self.use_skips else torch.zeros_like(x)

    def trunk(self, x):
        c1 = torch.cat([self._skip(x)] + [torch.relu(conv(x)) for conv in self.first], dim=-1)
        return torch.cat([self._skip(c1)] + [torch.relu(conv(c1)) for conv in self.second], dim=-1)

    def logits(self, batch):
        x = self.trunk(zero_padding(batch["features"], batch["mask"]))
        h, _ = run_rnn(self.lstm, x, batch["lengths"])
        return self.out(self.drop(h))


def build_conv_bilstm(cfg):
    if cfg.model_id != "F":
        raise ConfigError(f"build_conv_bilstm needs model_id F, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return ConvBiLSTM(cfg)
