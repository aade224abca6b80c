"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set ``Q8SSP_PURE_PYTHON=1`` before import to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("Q8SSP_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

onehot_decode = _impl.onehot_decode
window_mix = _impl.window_mix
confusion_counts = _impl.confusion_counts

__all__ = ["BACKEND", "onehot_decode", "window_mix", "confusion_counts"]
