"""Probability-averaging ensembles and the Q8 evaluation tables.

Confusion matrices follow the published layout: rows are predicted
classes, columns are ground truth, both over the eight DSSP classes
(noSeq never appears). Accuracy is the residue-level (micro) average;
the per-protein (macro) average is reported alongside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import LABEL_NOSEQ, LABEL_TOKENS, NUM_REAL_CLASSES
from .errors import AlignmentError, ConfigError, EmptyMaskError, FormatError, IntegrityError
from .io import atomic_write_text, load_array, read_json, save_array, sha256_file, write_json

CLASS_NAMES = LABEL_TOKENS[:NUM_REAL_CLASSES]
REPORT_FORMATS = ("table", "tsv", "json")


# -- ensembling ----------------------------------------------------------------

def _check_members(members):
    members = [np.asarray(m) for m in members]
    if not members:
        raise ConfigError("ensemble needs at least one member")
    shape = members[0].shape
    for k, m in enumerate(members[1:], 1):
        if m.shape != shape:
            raise AlignmentError(f"member {k} has shape {m.shape}, member 0 has {shape}")
    return members


def ensemble_mean(members: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of member probabilities, computed in float64.

    Members are sorted elementwise before summing so the result does not
    depend on member order, down to the last bit.
    """
    stack = np.sort(np.stack(_check_members(members)).astype(np.float64), axis=0)
    return stack.sum(axis=0) / len(stack)


def ensemble_argmax(members: Sequence[np.ndarray], mask=None) -> np.ndarray:
    """Class maximising the mean member probability; ties go to the lowest index.

    With ``mask``, real positions choose among the eight real classes only
    (a noSeq winner is replaced by the best real class) and padding
    positions are set to noSeq.
    """
    mean = ensemble_mean(members)
    if mask is None:
        return np.argmax(mean, axis=-1)
    mask = np.asarray(mask) != 0
    pred = np.argmax(mean[..., :NUM_REAL_CLASSES], axis=-1)
    pred[~mask] = LABEL_NOSEQ
    return pred


# -- metrics -------------------------------------------------------------------

def _masked(pred, gold, mask):
    pred, gold, mask = np.asarray(pred), np.asarray(gold), np.asarray(mask) != 0
    if pred.shape != gold.shape or gold.shape != mask.shape:
        raise AlignmentError(f"shape mismatch: pred {pred.shape}, gold {gold.shape}, mask {mask.shape}")
    if not mask.any():
        raise EmptyMaskError("no masked (real) positions to score")
    return pred, gold, mask


def correct_count(pred, gold, mask) -> tuple[int, int]:
    pred, gold, mask = _masked(pred, gold, mask)
    return int(((pred == gold) & mask).sum()), int(mask.sum())


def q8_accuracy(pred, gold, mask) -> float:
    """Correct residues / real residues over the whole dataset."""
    correct, total = correct_count(pred, gold, mask)
    return correct / total


def per_protein_accuracy(pred, gold, mask) -> float:
    """Mean over proteins of each protein's residue accuracy."""
    pred, gold, mask = _masked(pred, gold, mask)
    hits = ((pred == gold) & mask).sum(axis=-1)
    sizes = mask.sum(axis=-1)
    keep = sizes > 0
    return float(np.mean(hits[keep] / sizes[keep]))


def confusion_matrix(pred, gold, mask) -> np.ndarray:
    """8x8 integer counts; entry (r, c) = real positions predicted r with truth c."""
    pred, gold, mask = _masked(pred, gold, mask)
    cm, bad = kernels.confusion_counts(pred, gold, mask)
    if cm is None:
        where = np.unravel_index(bad, mask.shape)
        raise IntegrityError(
            f"label outside the 8 real classes at masked position {tuple(int(w) for w in where)} "
            f"(pred={int(pred[where])}, gold={int(gold[where])})",
            record=int(where[0]) if len(where) > 1 else None,
            position=int(where[-1]),
        )
    return cm


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


def per_class_prf(confusion) -> dict[str, np.ndarray]:
    m = np.asarray(confusion, dtype=np.int64)
    if m.shape != (NUM_REAL_CLASSES, NUM_REAL_CLASSES) or (m < 0).any():
        raise IntegrityError(f"confusion matrix must be 8x8 non-negative, got shape {m.shape}")
    diag = np.diag(m).astype(np.float64)
    precision = _ratio(diag, m.sum(axis=1).astype(np.float64))
    recall = _ratio(diag, m.sum(axis=0).astype(np.float64))
    denom = precision + recall
    f_score = np.divide(2 * precision * recall, denom, out=np.zeros(len(diag)), where=denom > 0)
    return {"precision": precision, "recall": recall, "f_score": f_score}


# -- reports -------------------------------------------------------------------

@dataclass(eq=False)
class EvalReport:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f_score: np.ndarray
    q8_accuracy: float
    residue_count: int
    per_protein_accuracy: float | None = None

    def __post_init__(self):
        self.verify()

    def verify(self):
        """Accuracy must equal trace/total of this report's own confusion matrix, exactly."""
        total = int(self.confusion.sum())
        if total != self.residue_count:
            raise IntegrityError(f"confusion total {total} != residue count {self.residue_count}")
        recomputed = int(np.trace(self.confusion)) / total
        if recomputed != self.q8_accuracy:
            raise IntegrityError(
                f"reported accuracy {self.q8_accuracy!r} != trace/total {recomputed!r} of its confusion matrix"
            )

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            np.array_equal(self.confusion, other.confusion)
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("precision", "recall", "f_score"))
            and self.q8_accuracy == other.q8_accuracy
            and self.residue_count == other.residue_count
            and self.per_protein_accuracy == other.per_protein_accuracy
        )

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=0)

    @classmethod
    def from_confusion(cls, confusion, per_protein: float | None = None) -> "EvalReport":
        cm = np.asarray(confusion, dtype=np.int64)
        prf = per_class_prf(cm)
        total = int(cm.sum())
        if total == 0:
            raise EmptyMaskError("empty confusion matrix")
        return cls(cm, prf["precision"], prf["recall"], prf["f_score"], int(np.trace(cm)) / total, total, per_protein)


def evaluate(pred, gold, mask) -> EvalReport:
    """Build the full report; accuracy is counted independently of the matrix and cross-checked."""
    cm = confusion_matrix(pred, gold, mask)
    correct, total = correct_count(pred, gold, mask)
    prf = per_class_prf(cm)
    return EvalReport(cm, prf["precision"], prf["recall"], prf["f_score"], correct / total, total,
                      per_protein_accuracy(pred, gold, mask))


def render_report(report: EvalReport, fmt: str = "table") -> str:
    if fmt == "table":
        return _render_table(report)
    if fmt == "tsv":
        return _render_tsv(report)
    if fmt == "json":
        return _render_json(report)
    raise ConfigError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")


def parse_report(text: str, fmt: str) -> EvalReport:
    if fmt == "json":
        d = json.loads(text)
        return EvalReport.from_confusion(np.array(d["confusion"]), d.get("per_protein_accuracy"))
    if fmt in ("table", "tsv"):
        return _parse_text(text, fmt)
    raise ConfigError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")


def _render_table(r: EvalReport) -> str:
    width = max(7, len(f"{int(r.confusion.max()):,}") + 1)
    lines = ["Confusion matrix (rows: predicted, columns: ground truth)"]
    lines.append("  " + "".join(f"{c:>{width}}" for c in CLASS_NAMES))
    for k, name in enumerate(CLASS_NAMES):
        lines.append(f"{name:<2}" + "".join(f"{v:>{width},}" for v in r.confusion[k]))
    lines.append("")
    lines.append(f"{'':<2}{'Precision':>11}{'Recall':>9}{'F-score':>9}{'Support':>9}")
    for k, name in enumerate(CLASS_NAMES):
        lines.append(f"{name:<2}{r.precision[k]:>11.4f}{r.recall[k]:>9.4f}{r.f_score[k]:>9.4f}{r.support[k]:>9}")
    lines.append("")
    lines.append(f"Q8 accuracy: {r.q8_accuracy:.4f} ({int(np.trace(r.confusion))}/{r.residue_count})")
    if r.per_protein_accuracy is not None:
        lines.append(f"per-protein accuracy: {r.per_protein_accuracy!r}")
    return "\n".join(lines) + "\n"


def _render_tsv(r: EvalReport) -> str:
    lines = ["section\tkey\t" + "\t".join(CLASS_NAMES)]
    for k, name in enumerate(CLASS_NAMES):
        lines.append(f"confusion\t{name}\t" + "\t".join(str(v) for v in r.confusion[k]))
    for metric in ("precision", "recall", "f_score"):
        lines.append(f"prf\t{metric}\t" + "\t".join(repr(float(v)) for v in getattr(r, metric)))
    lines.append(f"summary\tq8_accuracy\t{r.q8_accuracy!r}")
    lines.append(f"summary\tresidue_count\t{r.residue_count}")
    if r.per_protein_accuracy is not None:
        lines.append(f"summary\tper_protein_accuracy\t{r.per_protein_accuracy!r}")
    return "\n".join(lines) + "\n"


def _render_json(r: EvalReport) -> str:
    d = {
        "classes": list(CLASS_NAMES),
        "confusion": r.confusion.tolist(),
        "confusion_layout": "rows=predicted, columns=ground_truth",
        "precision": r.precision.tolist(),
        "recall": r.recall.tolist(),
        "f_score": r.f_score.tolist(),
        "support": r.support.tolist(),
        "q8_accuracy": r.q8_accuracy,
        "residue_count": r.residue_count,
        "per_protein_accuracy": r.per_protein_accuracy,
    }
    return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _parse_text(text: str, fmt: str) -> EvalReport:
    rows, per_protein = {}, None
    lines = text.splitlines()
    if fmt == "tsv":
        for line in lines[1:]:
            parts = line.split("\t")
            if parts[0] == "confusion":
                rows[parts[1]] = [int(v) for v in parts[2:]]
            elif parts[0] == "summary" and parts[1] == "per_protein_accuracy":
                per_protein = float(parts[2])
    else:
        for line in lines[2:2 + NUM_REAL_CLASSES]:
            name, *vals = line.split()
            rows[name] = [int(v.replace(",", "")) for v in vals]
        for line in lines:
            if line.startswith("per-protein accuracy:"):
                per_protein = float(line.split(":", 1)[1])
    try:
        cm = np.array([rows[c] for c in CLASS_NAMES], dtype=np.int64)
    except KeyError as exc:
        raise FormatError(f"report is missing confusion row {exc}") from exc
    return EvalReport.from_confusion(cm, per_protein)


def read_confusion(path) -> np.ndarray:
    """8x8 matrix from a whitespace/comma/tab separated file; optional header row and label column."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        parts = [p for p in line.replace(",", " ").replace("\t", " ").split() if p]
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] in CLASS_NAMES and len(parts) == NUM_REAL_CLASSES + 1:
            parts = parts[1:]
        if not all(p.isdigit() for p in parts):
            continue
        rows.append([int(p) for p in parts])
    m = np.array(rows, dtype=np.int64)
    if m.shape != (NUM_REAL_CLASSES, NUM_REAL_CLASSES):
        raise FormatError(f"{path}: expected an 8x8 integer matrix, got shape {m.shape}")
    return m


# -- interchange files ---------------------------------------------------------

def labels_to_string(pred_row, length) -> str:
    return "".join(LABEL_TOKENS[i] for i in pred_row[:length])


def write_predictions(path, ids, pred, lengths) -> Path:
    """One line per record: ``<id>\\t<label string over LBEGIHST>``."""
    lines = []
    for rid, row, n in zip(ids, pred, lengths):
        n = int(n)
        if (np.asarray(row[:n]) >= NUM_REAL_CLASSES).any():
            raise IntegrityError(f"{rid}: noSeq predicted at a real position")
        lines.append(f"{rid}\t{labels_to_string(row, n)}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    return Path(path)


def read_predictions(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rid, labels = line.split("\t")
        except ValueError as exc:
            raise FormatError(f"{path}:{n}: expected '<id>\\t<labels>'") from exc
        bad = set(labels) - set(CLASS_NAMES)
        if bad:
            raise FormatError(f"{path}:{n}: unknown label symbols {sorted(bad)}")
        if rid in out:
            raise FormatError(f"{path}:{n}: duplicate id {rid}")
        out[rid] = labels
    return out


def align_predictions(pred_map: dict[str, str], ids, gold, mask) -> np.ndarray:
    """Turn id-keyed label strings into an (N, 700) array ordered like ``ids``."""
    index = {c: i for i, c in enumerate(CLASS_NAMES)}
    mask = np.asarray(mask) != 0
    pred = np.full(np.shape(gold), LABEL_NOSEQ, dtype=np.int64)
    missing = [rid for rid in ids if rid not in pred_map]
    if missing:
        raise AlignmentError(f"{len(missing)} gold record(s) have no prediction, e.g. {missing[:3]}")
    for n, rid in enumerate(ids):
        s = pred_map[rid]
        length = int(mask[n].sum())
        if len(s) != length:
            raise AlignmentError(f"{rid}: prediction has {len(s)} residues, gold has {length}")
        pred[n, :length] = [index[c] for c in s]
    return pred


def save_probs(path, probs, ids, lengths, extra: dict | None = None) -> Path:
    """(N, 700, 9) float32 array plus a ``.json`` sidecar naming ids and lengths."""
    probs = np.asarray(probs, dtype=np.float32)
    if probs.ndim != 3 or probs.shape[2] != LABEL_NOSEQ + 1 or probs.shape[0] != len(ids):
        raise FormatError(f"probability tensor must be (N, L, 9) with N={len(ids)}, got {probs.shape}")
    path = Path(path)
    save_array(path, probs, dtype=np.float32)
    meta = {"ids": list(ids), "lengths": [int(n) for n in lengths], "sha256": sha256_file(path)}
    meta.update(extra or {})
    write_json(probs_sidecar(path), meta)
    return path


def probs_sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_probs(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    probs = load_array(path)
    side = probs_sidecar(path)
    if not side.exists():
        raise FormatError(f"{path}: missing sidecar {side.name}")
    meta = read_json(side)
    if probs.ndim != 3 or probs.shape[0] != len(meta["ids"]) or probs.shape[2] != LABEL_NOSEQ + 1:
        raise FormatError(f"{path}: shape {probs.shape} does not match sidecar ({len(meta['ids'])} ids)")
    return probs, meta


def lengths_mask(lengths, max_len) -> np.ndarray:
    return (np.arange(max_len)[None, :] < np.asarray(lengths)[:, None]).astype(np.uint8)
