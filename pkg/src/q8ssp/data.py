"""Benchmark container parsing, record types, and dataset hygiene checks.

The published CB6133 / CB513 containers store one protein per row as a
700 x 57 block of float32 values. :class:`RawLayout` names which columns
hold what; :func:`load_raw` turns rows into validated
:class:`ProteinRecord` objects. :func:`find_duplicates` and
:func:`check_disjoint` audit a corpus for repeated sequences and for
sequences shared across train/validation/test splits.
"""

from __future__ import annotations

import hashlib
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import FormatError, IntegrityError, LeakageError, SpecError
from .io import load_array

MAX_LEN = 700

RESIDUE_TOKENS = (
    "A", "C", "E", "D", "G", "F", "I", "H", "K", "M", "L",
    "N", "Q", "P", "S", "R", "T", "W", "V", "Y", "X", "noSeq",
)
LABEL_TOKENS = ("L", "B", "E", "G", "I", "H", "S", "T", "noSeq")

RESIDUE_NOSEQ = 21
RESIDUE_X = 20
LABEL_NOSEQ = 8
NUM_CLASSES = 9
NUM_REAL_CLASSES = 8

_RESIDUE_INDEX = {t: i for i, t in enumerate(RESIDUE_TOKENS)}
_LABEL_INDEX = {t: i for i, t in enumerate(LABEL_TOKENS)}


def residue_index(symbol: str) -> int:
    return _RESIDUE_INDEX[symbol]


def label_index(symbol: str) -> int:
    return _LABEL_INDEX[symbol]


@dataclass(frozen=True)
class RawLayout:
    """Column map of one 57-wide residue row. Ranges are half-open ``(start, stop)``."""

    residue_onehot_cols: tuple[int, int] = (0, 22)
    label_cols: tuple[int, int] = (22, 31)
    terminal_flag_cols: tuple[int, int] = (31, 33)
    profile_cols: tuple[int, int] = (35, 57)
    unused_cols: tuple[tuple[int, int], ...] = ((33, 35),)
    row_width: int = 57
    max_len: int = MAX_LEN

    def __post_init__(self):
        widths = {
            "residue_onehot_cols": (self.residue_onehot_cols, 22),
            "label_cols": (self.label_cols, 9),
            "terminal_flag_cols": (self.terminal_flag_cols, 2),
            "profile_cols": (self.profile_cols, 22),
        }
        for name, ((lo, hi), width) in widths.items():
            if hi - lo != width:
                raise FormatError(f"layout: {name} must span {width} columns, got {hi - lo}")
        covered = np.zeros(self.row_width, dtype=int)
        ranges = [r for r, _ in widths.values()] + [tuple(r) for r in self.unused_cols]
        for lo, hi in ranges:
            if lo < 0 or hi > self.row_width or lo > hi:
                raise FormatError(f"layout: range [{lo},{hi}) outside row of width {self.row_width}")
            covered[lo:hi] += 1
        if (covered != 1).any():
            raise FormatError("layout: column ranges must be disjoint and cover the row exactly")

    @classmethod
    def from_dict(cls, d: dict) -> "RawLayout":
        d = dict(d)
        for key in ("residue_onehot_cols", "label_cols", "terminal_flag_cols", "profile_cols"):
            if key in d:
                d[key] = tuple(d[key])
        if "unused_cols" in d:
            d["unused_cols"] = tuple(tuple(r) for r in d["unused_cols"])
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "residue_onehot_cols": list(self.residue_onehot_cols),
            "label_cols": list(self.label_cols),
            "terminal_flag_cols": list(self.terminal_flag_cols),
            "profile_cols": list(self.profile_cols),
            "unused_cols": [list(r) for r in self.unused_cols],
            "row_width": self.row_width,
            "max_len": self.max_len,
        }


DEFAULT_LAYOUT = RawLayout()


@dataclass(frozen=True, eq=False)
class ProteinRecord:
    id: str
    length: int
    residues: np.ndarray        # (700,) int64 into RESIDUE_TOKENS
    profile: np.ndarray         # (700, 22) float32
    terminal_flags: np.ndarray  # (700, 2) uint8: first, last
    labels: np.ndarray          # (700,) int64 into LABEL_TOKENS
    mask: np.ndarray            # (700,) uint8

    def __eq__(self, other):
        if not isinstance(other, ProteinRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.length == other.length
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("residues", "profile", "terminal_flags", "labels", "mask")
            )
        )

    __hash__ = None

    @property
    def sequence(self) -> str:
        return decode_sequence(self)

    @classmethod
    def from_sequence(cls, id, sequence, labels, profile=None, max_len=MAX_LEN):
        """Build a record from residue and label strings (tests, fixtures)."""
        n = len(sequence)
        if not 1 <= n <= max_len or len(labels) != n:
            raise IntegrityError(f"{id}: bad length {n} / {len(labels)}")
        residues = np.full(max_len, RESIDUE_NOSEQ, dtype=np.int64)
        residues[:n] = [_RESIDUE_INDEX[c] for c in sequence]
        lab = np.full(max_len, LABEL_NOSEQ, dtype=np.int64)
        lab[:n] = [_LABEL_INDEX[c] for c in labels]
        prof = np.zeros((max_len, 22), dtype=np.float32)
        if profile is not None:
            prof[:n] = profile
        return cls(id, n, residues, prof, terminal_flags_for(n, max_len), lab, mask_for(n, max_len))


def mask_for(length, max_len=MAX_LEN):
    m = np.zeros(max_len, dtype=np.uint8)
    m[:length] = 1
    return m


def terminal_flags_for(length, max_len=MAX_LEN):
    f = np.zeros((max_len, 2), dtype=np.uint8)
    f[0, 0] = 1
    f[length - 1, 1] = 1
    return f


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _as_blocks(raw, layout: RawLayout) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim == 2 and raw.shape[1] == layout.max_len * layout.row_width:
        raw = raw.reshape(raw.shape[0], layout.max_len, layout.row_width)
    if raw.ndim != 3 or raw.shape[1:] != (layout.max_len, layout.row_width):
        raise FormatError(
            f"expected (N, {layout.max_len * layout.row_width}) or "
            f"(N, {layout.max_len}, {layout.row_width}), got {raw.shape}"
        )
    if not np.issubdtype(raw.dtype, np.floating):
        raise FormatError(f"expected real-valued tensor, got dtype {raw.dtype}")
    return raw


def records_from_array(raw, layout: RawLayout = DEFAULT_LAYOUT, name: str = "dataset") -> list[ProteinRecord]:
    """Validate and split an in-memory container into records."""
    blocks = _as_blocks(raw, layout)
    L = layout.max_len

    def cols(r):
        return blocks[:, :, r[0]:r[1]]

    residues, bad = kernels.onehot_decode(cols(layout.residue_onehot_cols))
    if bad is not None:
        raise IntegrityError(
            f"{name}#{bad[0]}: residue one-hot at position {bad[1]} does not have exactly one active entry",
            record=bad[0], position=bad[1],
        )
    labels, bad = kernels.onehot_decode(cols(layout.label_cols))
    if bad is not None:
        raise IntegrityError(
            f"{name}#{bad[0]}: label one-hot at position {bad[1]} does not have exactly one active entry",
            record=bad[0], position=bad[1],
        )
    flags = (cols(layout.terminal_flag_cols) > 0.5).astype(np.uint8)
    profile = cols(layout.profile_cols).astype(np.float32)

    real = residues != RESIDUE_NOSEQ
    lengths = real.sum(axis=1)
    records = []
    pos = np.arange(L)
    for n in range(blocks.shape[0]):
        rid = f"{name}#{n}"
        length = int(lengths[n])
        if length == 0:
            raise IntegrityError(f"{rid}: record has no residues", record=n, position=0)
        expected = pos < length
        if not np.array_equal(real[n], expected):
            i = int(np.argmax(real[n] != expected))
            raise IntegrityError(f"{rid}: noSeq residue inside the sequence at position {i}", record=n, position=i)
        lab_real = labels[n] != LABEL_NOSEQ
        if not np.array_equal(lab_real, expected):
            i = int(np.argmax(lab_real != expected))
            raise IntegrityError(f"{rid}: label/mask mismatch at position {i}", record=n, position=i)
        want = terminal_flags_for(length, L)
        if not np.array_equal(flags[n], want):
            i = int(np.argmax((flags[n] != want).any(axis=1)))
            raise IntegrityError(f"{rid}: terminal flags inconsistent at position {i}", record=n, position=i)
        rec = ProteinRecord(
            id=rid,
            length=length,
            residues=residues[n].copy(),
            profile=profile[n].copy(),
            terminal_flags=flags[n].copy(),
            labels=labels[n].copy(),
            mask=expected.astype(np.uint8),
        )
        _freeze(rec.residues, rec.profile, rec.terminal_flags, rec.labels, rec.mask)
        records.append(rec)
    return records


def dataset_name(path) -> str:
    name = Path(path).name
    for suffix in (".gz", ".npy"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def load_raw(path, layout: RawLayout = DEFAULT_LAYOUT, name: str | None = None) -> list[ProteinRecord]:
    """Parse a benchmark container file. Record ids are ``<name>#<row>``."""
    return records_from_array(load_array(path), layout, name or dataset_name(path))


def encode_raw(records: Sequence[ProteinRecord], layout: RawLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """Inverse of :func:`records_from_array`; unused columns come back as zeros."""
    out = np.zeros((len(records), layout.max_len, layout.row_width), dtype=np.float32)
    pos = np.arange(layout.max_len)
    for n, rec in enumerate(records):
        lo, _ = layout.residue_onehot_cols
        out[n, pos, lo + rec.residues] = 1.0
        lo, _ = layout.label_cols
        out[n, pos, lo + rec.labels] = 1.0
        lo, hi = layout.terminal_flag_cols
        out[n, :, lo:hi] = rec.terminal_flags
        lo, hi = layout.profile_cols
        out[n, :, lo:hi] = rec.profile
    return out


def decode_sequence(record: ProteinRecord) -> str:
    return "".join(RESIDUE_TOKENS[i] for i in record.residues[: record.length])


def decode_labels(record: ProteinRecord) -> str:
    return "".join(LABEL_TOKENS[i] for i in record.labels[: record.length])


def sequence_hash(seq: str) -> str:
    return hashlib.sha1(seq.encode("ascii")).hexdigest()[:16]


def find_duplicates(records: Sequence[ProteinRecord]) -> list[tuple[int, ...]]:
    """Groups of indices whose decoded sequences are identical, ordered by first index."""
    groups = defaultdict(list)
    for i, rec in enumerate(records):
        groups[decode_sequence(rec)].append(i)
    return sorted((tuple(g) for g in groups.values() if len(g) > 1), key=lambda g: g[0])


def deduplicate(records: Sequence[ProteinRecord]) -> list[ProteinRecord]:
    """Keep the first occurrence of each sequence."""
    drop = {i for g in find_duplicates(records) for i in g[1:]}
    return [r for i, r in enumerate(records) if i not in drop]


@dataclass(frozen=True)
class SplitSpec:
    train: frozenset
    validation: frozenset
    test: frozenset

    def __init__(self, train: Iterable[int], validation: Iterable[int] = (), test: Iterable[int] = ()):
        object.__setattr__(self, "train", frozenset(int(i) for i in train))
        object.__setattr__(self, "validation", frozenset(int(i) for i in validation))
        object.__setattr__(self, "test", frozenset(int(i) for i in test))

    def parts(self):
        return (("train", self.train), ("validation", self.validation), ("test", self.test))

    def validate(self, n_records: int):
        for name, idx in self.parts():
            out = [i for i in idx if not 0 <= i < n_records]
            if out:
                raise SpecError(f"{name} indices out of range [0, {n_records}): {sorted(out)[:10]}")
        parts = self.parts()
        for a in range(3):
            for b in range(a + 1, 3):
                shared = parts[a][1] & parts[b][1]
                if shared:
                    raise SpecError(
                        f"split index sets overlap: {parts[a][0]} and {parts[b][0]} share {sorted(shared)[:10]}"
                    )

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(d.get("train", ()), d.get("validation", d.get("val", ())), d.get("test", ()))

    def to_dict(self) -> dict:
        return {name: sorted(idx) for name, idx in self.parts()}


@dataclass(frozen=True)
class LeakPair:
    split_a: str
    index_a: int
    split_b: str
    index_b: int
    sequence_hash: str


@dataclass
class LeakageReport:
    pairs: list[LeakPair] = field(default_factory=list)

    def __bool__(self):
        return bool(self.pairs)

    def __len__(self):
        return len(self.pairs)

    @property
    def clean(self) -> bool:
        return not self.pairs

    def indices_in(self, split: str) -> set[int]:
        out = set()
        for p in self.pairs:
            if p.split_a == split:
                out.add(p.index_a)
            if p.split_b == split:
                out.add(p.index_b)
        return out

    def to_text(self) -> str:
        if not self.pairs:
            return "OK: splits are disjoint (0 shared sequences)\n"
        lines = [f"LEAKAGE: {len(self.pairs)} cross-split pair(s) with identical sequences"]
        for p in self.pairs:
            lines.append(f"  {p.split_a}[{p.index_a}] == {p.split_b}[{p.index_b}]  seq:{p.sequence_hash}")
        return "\n".join(lines) + "\n"

    def to_tsv(self) -> str:
        rows = ["split_a\tindex_a\tsplit_b\tindex_b\tsequence_hash"]
        rows += [f"{p.split_a}\t{p.index_a}\t{p.split_b}\t{p.index_b}\t{p.sequence_hash}" for p in self.pairs]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "LeakageReport":
        pairs = []
        for line in text.strip().splitlines()[1:]:
            a, ia, b, ib, h = line.split("\t")
            pairs.append(LeakPair(a, int(ia), b, int(ib), h))
        return cls(pairs)


def cross_split_pairs(groups: Sequence[tuple[str, Sequence[int], Sequence[str]]]) -> LeakageReport:
    """Every pair of entries from different groups with equal sequences.

    ``groups`` holds ``(split_name, indices, sequences)`` triples; reported
    indices are taken from ``indices``.
    """
    where = defaultdict(list)
    for g, (_, indices, seqs) in enumerate(groups):
        for idx, seq in zip(indices, seqs):
            where[seq].append((g, idx))
    pairs = []
    for seq, hits in where.items():
        if len({g for g, _ in hits}) < 2:
            continue
        h = sequence_hash(seq)
        for a in range(len(hits)):
            for b in range(a + 1, len(hits)):
                (ga, ia), (gb, ib) = sorted((hits[a], hits[b]))
                if ga != gb:
                    pairs.append(LeakPair(groups[ga][0], ia, groups[gb][0], ib, h))
    order = {name: k for k, (name, _, _) in enumerate(groups)}
    pairs.sort(key=lambda p: (order[p.split_a], p.index_a, order[p.split_b], p.index_b))
    return LeakageReport(pairs)


def check_disjoint(records: Sequence[ProteinRecord], spec: SplitSpec) -> LeakageReport:
    """Report every cross-split pair of records sharing a decoded sequence."""
    spec.validate(len(records))
    groups = []
    for name, idx in spec.parts():
        order = sorted(idx)
        groups.append((name, order, [decode_sequence(records[i]) for i in order]))
    return cross_split_pairs(groups)


def apply_split(records: Sequence[ProteinRecord], spec: SplitSpec, allow_leakage: bool = False):
    """Partition ``records`` into (train, validation, test) lists, order preserved."""
    report = check_disjoint(records, spec)
    if report:
        if not allow_leakage:
            raise LeakageError(f"refusing to split: {len(report)} leaking pair(s)", report)
        warnings.warn(f"splitting despite {len(report)} leaking pair(s)", stacklevel=2)
    return tuple([records[i] for i in sorted(idx)] for _, idx in spec.parts())
