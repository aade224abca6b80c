"""Pure numpy implementations of the per-residue kernels.

These are the reference semantics; ``_ckernels.pyx`` must agree with them
bit for bit (integer outputs) or to float32 rounding (window mix).
"""

import numpy as np

NUM_RESIDUE_TOKENS = 22
NUM_REAL_CLASSES = 8


def onehot_decode(block):
    """Return ``(indices, bad)`` for an (N, L, W) one-hot block.

    An entry is active when it exceeds 0.5. ``indices[n, i]`` is the active
    column, or -1 when the row does not have exactly one active entry.
    ``bad`` is the (record, position) of the first such row in row-major
    order, or None.
    """
    active = np.asarray(block) > 0.5
    counts = active.sum(axis=-1)
    indices = np.argmax(active, axis=-1).astype(np.int64)
    ok = counts == 1
    indices[~ok] = -1
    bad = None
    if not ok.all():
        n, i = np.argwhere(~ok)[0]
        bad = (int(n), int(i))
    return indices, bad


def window_mix(residues, lengths, decay):
    residues = np.asarray(residues, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    n, L = residues.shape
    onehot = np.zeros((n, L, NUM_RESIDUE_TOKENS), dtype=np.float64)
    real = np.arange(L)[None, :] < lengths[:, None]
    rows, cols = np.nonzero(real)
    onehot[rows, cols, residues[rows, cols]] = 1.0

    preceding = np.zeros((n, L, NUM_RESIDUE_TOKENS), dtype=np.float64)
    following = np.zeros_like(preceding)
    # acc[i] = sum_k decay^k onehot[i-k]; wsum tracks the matching weight total
    acc = np.zeros((n, NUM_RESIDUE_TOKENS))
    wsum = np.zeros(n)
    for i in range(1, L):
        acc = decay * (acc + onehot[:, i - 1])
        wsum = decay * (wsum + real[:, i - 1])
        live = real[:, i] & (wsum > 0)
        preceding[live, i] = acc[live] / wsum[live, None]
    acc = np.zeros((n, NUM_RESIDUE_TOKENS))
    wsum = np.zeros(n)
    for i in range(L - 2, -1, -1):
        # padding never enters the context; skipping it also avoids underflow
        upd = real[:, i + 1]
        acc[upd] = decay * (acc[upd] + onehot[upd, i + 1])
        wsum[upd] = decay * (wsum[upd] + 1.0)
        live = real[:, i] & (wsum > 0)
        following[live, i] = acc[live] / wsum[live, None]
    return preceding.astype(np.float32), following.astype(np.float32)


def confusion_counts(pred, gold, mask):
    """8x8 counts, rows predicted, columns truth. Returns ``(matrix, bad)``.

    ``bad`` is the flat index of the first masked position whose gold or
    predicted label lies outside the eight real classes, else -1.
    """
    pred = np.asarray(pred, dtype=np.int64).ravel()
    gold = np.asarray(gold, dtype=np.int64).ravel()
    sel = np.asarray(mask).ravel() != 0
    p, g = pred[sel], gold[sel]
    invalid = (p < 0) | (p >= NUM_REAL_CLASSES) | (g < 0) | (g >= NUM_REAL_CLASSES)
    if invalid.any():
        return None, int(np.flatnonzero(sel)[np.argmax(invalid)])
    flat = np.bincount(p * NUM_REAL_CLASSES + g, minlength=NUM_REAL_CLASSES**2)
    return flat.reshape(NUM_REAL_CLASSES, NUM_REAL_CLASSES).astype(np.int64), -1
