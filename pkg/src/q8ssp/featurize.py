"""Deterministic model-input encodings.

Three encodings feed the six architectures:

* :func:`encode_features` -- the 46-wide residue vector
  (22 one-hot + 22 profile + 2 terminal flags);
* :func:`make_bigrams` -- forward-looking residue-pair tokens over a 484-symbol vocabulary;
* :func:`window_mix` -- exponentially weighted averages of the one-hots before and after each position.

:class:`EncodedDataset` bundles all of them with labels and masks so a
training loop can slice batches without touching records again.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import (
    DEFAULT_LAYOUT,
    MAX_LEN,
    RESIDUE_NOSEQ,
    ProteinRecord,
    RawLayout,
    decode_sequence,
)
from .errors import ConfigError, FormatError
from .io import hash_arrays, hash_text, load_array, save_array

NUM_FEATURES = 46
BIGRAM_VOCAB = 22 * 22
BIGRAM_PAD = 22 * RESIDUE_NOSEQ + RESIDUE_NOSEQ  # 483
DEFAULT_DECAY = 0.5

ONEHOT_SLICE = slice(0, 22)
PROFILE_SLICE = slice(22, 44)
FLAG_SLICE = slice(44, 46)


@dataclass(frozen=True)
class FeatureTensor:
    values: np.ndarray  # (N, 700, 46) float32
    mask: np.ndarray    # (N, 700) uint8


@dataclass(frozen=True)
class BigramStream:
    tokens: np.ndarray  # (N, 700) int64 in [0, 484)


@dataclass(frozen=True)
class WindowMixFeatures:
    preceding: np.ndarray  # (N, 700, 22) float32
    following: np.ndarray  # (N, 700, 22) float32


def _stack(records, attr):
    return np.stack([getattr(r, attr) for r in records]) if records else None


def _residues(records):
    if not records:
        return np.zeros((0, MAX_LEN), dtype=np.int64)
    return np.stack([r.residues for r in records]).astype(np.int64)


def squash(profile):
    return 1.0 / (1.0 + np.exp(-profile))


def encode_features(records: Sequence[ProteinRecord], squash_profile: bool = False) -> FeatureTensor:
    residues = _residues(records)
    n, L = residues.shape
    values = np.zeros((n, L, NUM_FEATURES), dtype=np.float32)
    nn, ii = np.indices((n, L))
    values[nn, ii, residues] = 1.0
    if n:
        profile = _stack(records, "profile").astype(np.float32)
        if squash_profile:
            mask = _stack(records, "mask")[..., None].astype(np.float32)
            profile = (squash(profile) * mask).astype(np.float32)
        values[..., PROFILE_SLICE] = profile
        values[..., FLAG_SLICE] = _stack(records, "terminal_flags")
        mask = _stack(records, "mask").astype(np.uint8)
    else:
        mask = np.zeros((0, L), dtype=np.uint8)
    return FeatureTensor(values, mask)


def bigram_tokens(residues: np.ndarray) -> np.ndarray:
    """Token ``22*r[i] + r[i+1]``; the final real position pairs with noSeq."""
    residues = np.asarray(residues, dtype=np.int64)
    nxt = np.full_like(residues, RESIDUE_NOSEQ)
    nxt[..., :-1] = residues[..., 1:]
    return 22 * residues + nxt


def make_bigrams(records: Sequence[ProteinRecord]) -> BigramStream:
    return BigramStream(bigram_tokens(_residues(records)))


def window_mix(records: Sequence[ProteinRecord], decay: float = DEFAULT_DECAY) -> WindowMixFeatures:
    if not 0.0 < decay <= 1.0:
        raise ConfigError(f"window-mix decay must lie in (0, 1], got {decay}")
    residues = _residues(records)
    lengths = np.array([r.length for r in records], dtype=np.int64)
    pre, fol = kernels.window_mix(residues, lengths, float(decay))
    return WindowMixFeatures(pre, fol)


@dataclass
class EncodedDataset:
    """Every encoding of a record list plus labels, ready for batching."""

    name: str
    ids: list[str]
    sequences: list[str]
    features: np.ndarray  # (N, 700, 46)
    bigrams: np.ndarray   # (N, 700)
    window: np.ndarray    # (N, 700, 44): preceding ++ following
    labels: np.ndarray    # (N, 700)
    mask: np.ndarray      # (N, 700)

    def __len__(self):
        return len(self.ids)

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(
            self.name,
            [self.ids[i] for i in idx],
            [self.sequences[i] for i in idx],
            self.features[idx],
            self.bigrams[idx],
            self.window[idx],
            self.labels[idx],
            self.mask[idx],
        )

    def content_hash(self) -> str:
        return hash_arrays(self.features, self.bigrams, self.window, self.labels, self.mask,
                           extra="\n".join(self.ids))


def prepare(records: Sequence[ProteinRecord], name: str = "dataset", decay: float = DEFAULT_DECAY,
            squash_profile: bool = False) -> EncodedDataset:
    feats = encode_features(records, squash_profile=squash_profile)
    mix = window_mix(records, decay)
    labels = _stack(records, "labels") if records else np.zeros((0, MAX_LEN), dtype=np.int64)
    return EncodedDataset(
        name=name,
        ids=[r.id for r in records],
        sequences=[decode_sequence(r) for r in records],
        features=feats.values,
        bigrams=make_bigrams(records).tokens,
        window=np.concatenate([mix.preceding, mix.following], axis=-1),
        labels=np.asarray(labels, dtype=np.int64),
        mask=feats.mask,
    )


# -- caching -----------------------------------------------------------------

def cache_key(dataset_hash: str, layout: RawLayout = DEFAULT_LAYOUT, decay: float = DEFAULT_DECAY,
              squash_profile: bool = False) -> str:
    blob = f"{dataset_hash}|{sorted(layout.to_dict().items())}|{decay!r}|{squash_profile}"
    return hash_text(blob)[:16]


_CACHED = ("features", "bigrams", "window", "labels", "mask")
_DTYPES = {"features": np.float32, "bigrams": np.int64, "window": np.float32,
           "labels": np.int64, "mask": np.uint8}


def cache_paths(directory, name: str, key: str) -> dict[str, Path]:
    d = Path(directory)
    return {part: d / f"{name}.{part}.{key}.npy" for part in _CACHED} | {"ids": d / f"{name}.ids.{key}.txt"}


def save_cached(ds: EncodedDataset, directory, key: str) -> dict[str, Path]:
    paths = cache_paths(directory, ds.name, key)
    for part in _CACHED:
        save_array(paths[part], getattr(ds, part), dtype=_DTYPES[part])
    lines = [f"{i}\t{s}" for i, s in zip(ds.ids, ds.sequences)]
    paths["ids"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


def load_cached(directory, name: str, key: str) -> EncodedDataset | None:
    paths = cache_paths(directory, name, key)
    if not all(p.exists() for p in paths.values()):
        return None
    arrays = {part: load_array(paths[part]) for part in _CACHED}
    rows = [line.split("\t") for line in paths["ids"].read_text(encoding="utf-8").splitlines() if line]
    if len(rows) != len(arrays["mask"]):
        raise FormatError(f"cache {name}.{key}: id list does not match tensors")
    return EncodedDataset(name, [r[0] for r in rows], [r[1] for r in rows], **arrays)
