"""Compiled kernels vs the numpy fallback on CB513-sized inputs.

    python benchmarks/bench_kernels.py [--records 514] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from q8ssp import _pykernels

try:
    from q8ssp import _ckernels
except ImportError:
    _ckernels = None


def inputs(n_records: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(30, 700, size=n_records)
    residues = np.full((n_records, 700), 21, dtype=np.int64)
    for n, L in enumerate(lengths):
        residues[n, :L] = rng.integers(0, 21, size=L)
    onehot = np.zeros((n_records, 700, 22), dtype=np.float32)
    np.put_along_axis(onehot, residues[..., None], 1.0, axis=-1)
    mask = (residues != 21).astype(np.uint8)
    gold = rng.integers(0, 8, size=(n_records, 700))
    pred = rng.integers(0, 8, size=(n_records, 700))
    return {
        "onehot_decode": lambda k: k.onehot_decode(onehot),
        "window_mix": lambda k: k.window_mix(residues, lengths, 0.5),
        "confusion_counts": lambda k: k.confusion_counts(pred, gold, mask),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=514)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = inputs(args.records)
    print(f"{args.records} records x 700 positions, best of {args.repeat}")
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        py = min(timeit.repeat(lambda: call(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<18}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        cy = min(timeit.repeat(lambda: call(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
