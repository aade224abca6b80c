"""Model A: stacked recurrent layers with pairwise attention and no convolutions."""

import itertools

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError
from ..featurize import BIGRAM_VOCAB, PROFILE_SLICE
from .layers import SSPModel, dot_attention, head, run_rnn


class AttentionLSTM(SSPModel):
    model_id = "A"
    input_signature = ("bigrams", "features", "lengths", "mask")

    def __init__(self, cfg):
        super().__init__(cfg)
        bi, uni = cfg["bilstm_units"], cfg["lstm_units"]
        if 2 * bi != uni:
            # the chain is seeded with the concatenated bidirectional final state
            raise ConfigError(f"model A needs lstm_units == 2 * bilstm_units, got {uni} vs {bi}")
        self.embed = nn.Embedding(BIGRAM_VOCAB, cfg.embedding_dim)
        self.bilstm = nn.LSTM(cfg.embedding_dim + 22, bi, batch_first=True, bidirectional=True)
        self.chain = nn.ModuleList(
            nn.LSTM(uni, uni, batch_first=True) for _ in range(cfg["num_lstm"])
        )
        self.pairs = list(itertools.combinations(range(cfg["num_lstm"] + 1), 2))
        # attentional state tanh(W [context; query]) per pair, as in the multiplicative form
        self.combine = nn.ModuleList(nn.Linear(2 * uni, uni) for _ in self.pairs)
        self.fc = nn.Sequential(nn.Linear(uni, cfg["fc_units"]), nn.ReLU(), nn.Dropout(cfg["dropout"]))
        self.out = head(cfg["fc_units"])

    def layer_outputs(self, batch):
        x = torch.cat([self.embed(batch["bigrams"]), batch["features"][..., PROFILE_SLICE]], dim=-1)
        lengths = batch["lengths"]
        out, (h, c) = run_rnn(self.bilstm, x, lengths)
        state = (torch.cat([h[0], h[1]], dim=-1)[None], torch.cat([c[0], c[1]], dim=-1)[None])
        outputs = [out]
        for lstm in self.chain:
            out, state = run_rnn(lstm, out, lengths, state)
            outputs.append(out)
        return outputs

    def logits(self, batch):
        outputs = self.layer_outputs(batch)
        L = outputs[0].shape[1]
        # keys past the longest real sequence are masked anyway; cropping is exact
        span = int(batch["lengths"].max())
        outputs = [o[:, :span] for o in outputs]
        mask = batch["mask"][:, :span]
        total = 0
        for (early, late), combine in zip(self.pairs, self.combine):
            query = outputs[late]
            ctx, _ = dot_attention(query, outputs[early], outputs[early], mask)
            total = total + torch.tanh(combine(torch.cat([ctx, query], dim=-1)))
        total = F.pad(total, (0, 0, 0, L - span))
        return self.out(self.fc(total))


def build_attention_lstm(cfg):
    if cfg.model_id != "A":
        raise ConfigError(f"build_attention_lstm needs model_id A, got {cfg.model_id}")
    torch.manual_seed(cfg.seed)
    return AttentionLSTM(cfg)
