"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from q8ssp import _pykernels, kernels

try:
    from q8ssp import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def _onehot_block(rng, n=5, L=40, W=22):
    idx = rng.integers(0, W, size=(n, L))
    block = np.zeros((n, L, W), dtype=np.float32)
    np.put_along_axis(block, idx[..., None], 1.0, axis=-1)
    return block, idx


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_onehot_decode(impl, rng):
    block, idx = _onehot_block(rng)
    got, bad = impl.onehot_decode(block)
    assert bad is None and (got == idx).all()
    block[3, 7] = 0
    block[4, 2, :2] = 1
    got, bad = impl.onehot_decode(block)
    assert bad == (3, 7)
    assert got[3, 7] == -1 and got[4, 2] == -1


@pytest.mark.parametrize("impl", [_pykernels, pytest.param(_ckernels, marks=needs_ext)])
def test_confusion_counts(impl, rng):
    pred = rng.integers(0, 8, size=(3, 50))
    gold = rng.integers(0, 8, size=(3, 50))
    mask = rng.integers(0, 2, size=(3, 50))
    cm, bad = impl.confusion_counts(pred, gold, mask)
    brute = np.zeros((8, 8), dtype=int)
    for p, g, m in zip(pred.ravel(), gold.ravel(), mask.ravel()):
        if m:
            brute[p, g] += 1
    assert bad == -1 and (cm == brute).all()
    gold[1, 4], mask[1, 4] = 8, 1
    cm, bad = impl.confusion_counts(pred, gold, mask)
    assert cm is None and bad == 54


@needs_ext
@pytest.mark.parametrize("decay", [0.05, 0.5, 1.0])
def test_window_mix_agrees(decay, rng):
    residues = np.full((6, 700), 21)
    lengths = rng.integers(1, 700, size=6)
    lengths[0] = 700
    lengths[1] = 1
    for n, L in enumerate(lengths):
        residues[n, :L] = rng.integers(0, 21, size=L)
    a = _pykernels.window_mix(residues, lengths, decay)
    b = _ckernels.window_mix(residues, lengths, decay)
    for x, y in zip(a, b):
        assert x.dtype == y.dtype == np.float32
        assert np.allclose(x, y, atol=1e-6)
