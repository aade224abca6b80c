# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``; same signatures and results."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF NTOK = 22
DEF NCLS = 8


def onehot_decode(block):
    cdef float[:, :, ::1] b = np.ascontiguousarray(block, dtype=np.float32)
    cdef Py_ssize_t n = b.shape[0], L = b.shape[1], W = b.shape[2]
    out = np.empty((n, L), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] idx = out
    cdef Py_ssize_t r, i, w
    cdef int count
    cdef cnp.int64_t hit
    cdef Py_ssize_t bad_r = -1, bad_i = -1
    with nogil:
        for r in range(n):
            for i in range(L):
                count = 0
                hit = -1
                for w in range(W):
                    if b[r, i, w] > 0.5:
                        count += 1
                        if hit < 0:
                            hit = w
                if count != 1:
                    hit = -1
                    if bad_r < 0:
                        bad_r = r
                        bad_i = i
                idx[r, i] = hit
    bad = None if bad_r < 0 else (int(bad_r), int(bad_i))
    return out, bad


def window_mix(residues, lengths, double decay):
    cdef cnp.int64_t[:, ::1] res = np.ascontiguousarray(residues, dtype=np.int64)
    cdef cnp.int64_t[::1] lens = np.ascontiguousarray(lengths, dtype=np.int64)
    cdef Py_ssize_t n = res.shape[0], L = res.shape[1]
    pre_arr = np.zeros((n, L, NTOK), dtype=np.float32)
    fol_arr = np.zeros((n, L, NTOK), dtype=np.float32)
    cdef float[:, :, ::1] pre = pre_arr
    cdef float[:, :, ::1] fol = fol_arr
    cdef double acc[NTOK]
    cdef double wsum
    cdef Py_ssize_t r, i, t, length
    with nogil:
        for r in range(n):
            length = lens[r]
            if length > L:
                length = L
            for t in range(NTOK):
                acc[t] = 0.0
            wsum = 0.0
            for i in range(1, length):
                for t in range(NTOK):
                    acc[t] *= decay
                acc[res[r, i - 1]] += decay
                wsum = decay * (wsum + 1.0)
                for t in range(NTOK):
                    pre[r, i, t] = <float>(acc[t] / wsum)
            for t in range(NTOK):
                acc[t] = 0.0
            wsum = 0.0
            for i in range(length - 2, -1, -1):
                for t in range(NTOK):
                    acc[t] *= decay
                acc[res[r, i + 1]] += decay
                wsum = decay * (wsum + 1.0)
                for t in range(NTOK):
                    fol[r, i, t] = <float>(acc[t] / wsum)
    return pre_arr, fol_arr


def confusion_counts(pred, gold, mask):
    cdef cnp.int64_t[::1] p = np.ascontiguousarray(pred, dtype=np.int64).ravel()
    cdef cnp.int64_t[::1] g = np.ascontiguousarray(gold, dtype=np.int64).ravel()
    cdef cnp.uint8_t[::1] m = (np.ascontiguousarray(mask).ravel() != 0).astype(np.uint8)
    out = np.zeros((NCLS, NCLS), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cm = out
    cdef Py_ssize_t k, size = p.shape[0]
    cdef Py_ssize_t bad = -1
    with nogil:
        for k in range(size):
            if not m[k]:
                continue
            if p[k] < 0 or p[k] >= NCLS or g[k] < 0 or g[k] >= NCLS:
                bad = k
                break
            cm[p[k], g[k]] += 1
    if bad >= 0:
        return None, int(bad)
    return out, -1
