"""Synthetic corpora in the benchmark's record format, for tests, demos and benchmarks.

Labels are a fixed random function of each residue and its successor, so
every architecture can fit them; nothing here resembles real structure.
"""

from __future__ import annotations

import numpy as np

from .data import (
    DEFAULT_LAYOUT,
    LABEL_NOSEQ,
    MAX_LEN,
    RESIDUE_NOSEQ,
    ProteinRecord,
    RawLayout,
    encode_raw,
    mask_for,
    terminal_flags_for,
)
from .io import save_array


def label_rule(seed: int = 1234) -> np.ndarray:
    """22 x 22 table: (residue, next residue) -> one of the 8 real classes."""
    return np.random.default_rng(seed).integers(0, LABEL_NOSEQ, size=(22, 22))


def synthetic_records(n: int, seed: int = 0, min_len: int = 30, max_len: int = 120,
                      name: str = "synthetic", rule_seed: int = 1234) -> list[ProteinRecord]:
    rng = np.random.default_rng(seed)
    rule = label_rule(rule_seed)
    records = []
    for k in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        residues = np.full(MAX_LEN, RESIDUE_NOSEQ, dtype=np.int64)
        residues[:length] = rng.integers(0, 21, size=length)
        nxt = np.full(MAX_LEN, RESIDUE_NOSEQ, dtype=np.int64)
        nxt[: length - 1] = residues[1:length]
        labels = np.full(MAX_LEN, LABEL_NOSEQ, dtype=np.int64)
        labels[:length] = rule[residues[:length], nxt[:length]]
        profile = np.zeros((MAX_LEN, 22), dtype=np.float32)
        profile[:length] = rng.normal(0.0, 0.3, size=(length, 22))
        profile[np.arange(length), residues[:length]] += 1.0
        records.append(ProteinRecord(
            id=f"{name}#{k}", length=length, residues=residues, profile=profile,
            terminal_flags=terminal_flags_for(length), labels=labels, mask=mask_for(length),
        ))
    return records


def write_container(path, records, layout: RawLayout = DEFAULT_LAYOUT, flat: bool = True):
    """Save records as a little-endian float32 container, (N, 39900) when ``flat``."""
    raw = encode_raw(records, layout)
    if flat:
        raw = raw.reshape(len(records), -1)
    return save_array(path, raw)
