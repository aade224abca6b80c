"""Checks shared by the architecture tests and the acceptance suite."""

import numpy as np
import torch

from q8ssp.archzoo import build_model, make_batch
from q8ssp.train import masked_xent_from_log


def simplex_error(probs) -> float:
    """Largest deviation of a row sum from 1 (inf if any entry is negative)."""
    if (probs < 0).any():
        return float("inf")
    return float((probs.sum(-1) - 1).abs().max())


def gradient_mismatches(cfg, ds, n_params=16, eps=1e-6, rel=1e-3, seed=0):
    """Central differences vs autograd in float64, inference mode, on 2 records.

    Samples ``n_params`` scalar parameters among those with a non-negligible
    gradient; returns the list of (param index, flat index, analytic, numeric)
    that disagree beyond ``rel``.
    """
    model = build_model(cfg).double().eval()
    batch = make_batch(ds, np.arange(2), dtype=torch.float64)
    labels = ds.labels[:2]

    def loss():
        return masked_xent_from_log(model.log_probs(batch), labels, batch["mask"]) + model.regularization()

    model.zero_grad()
    loss().backward()
    params = [p for p in model.parameters() if p.requires_grad]
    candidates = [(i, j) for i, p in enumerate(params)
                  for j in torch.nonzero(p.grad.reshape(-1).abs() > 1e-6).flatten().tolist()]
    picks = np.random.default_rng(seed).choice(len(candidates), size=n_params, replace=False)
    bad = []
    with torch.no_grad():
        for k in picks:
            i, j = candidates[k]
            flat = params[i].view(-1)
            analytic = float(params[i].grad.reshape(-1)[j])
            orig = float(flat[j])
            flat[j] = orig + eps
            up = float(loss())
            flat[j] = orig - eps
            down = float(loss())
            flat[j] = orig
            numeric = (up - down) / (2 * eps)
            if abs(numeric - analytic) > rel * max(abs(analytic), abs(numeric)) + 1e-9:
                bad.append((i, j, analytic, numeric))
    return bad
