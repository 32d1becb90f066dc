"""Time the compiled kernels against the numpy fallback and check they agree.

    python3 benchmarks/bench_kernels.py [--size 1048576] [--repeat 5]
"""
import argparse
import math
import timeit

import numpy as np

from bindetect import _kernels_py
from bindetect.features import MIN_STRING_LEN, STEP, WINDOW, XLOGX

try:
    from bindetect import _kernels
except ImportError:
    _kernels = None


def sample_blob(size, seed=0):
    # mix of random, low-entropy and printable regions, like a real binary
    rng = np.random.default_rng(seed)
    parts = []
    while sum(map(len, parts)) < size:
        kind = rng.integers(3)
        n = int(rng.integers(512, 16384))
        if kind == 0:
            parts.append(rng.integers(0, 256, n, dtype=np.uint8).tobytes())
        elif kind == 1:
            parts.append(bytes(n))
        else:
            parts.append(rng.integers(0x20, 0x7F, n, dtype=np.uint8).tobytes())
    return b"".join(parts)[:size]


def kernels_for(mod, blob):
    log2w = math.log2(WINDOW)
    return {
        "byte_entropy_hist": lambda: mod.byte_entropy_hist(blob, WINDOW, STEP, XLOGX, log2w),
        "string_hist": lambda: mod.string_hist(blob, MIN_STRING_LEN),
        "fnv1a64 (4 KiB)": lambda: mod.fnv1a64(blob[:4096]),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1 << 20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    blob = sample_blob(args.size)
    py = kernels_for(_kernels_py, blob)
    if _kernels is None:
        print("compiled kernels not built; timing the numpy fallback only")
    cy = kernels_for(_kernels, blob) if _kernels is not None else {}

    print(f"input: {len(blob):,} bytes, best of {args.repeat}")
    print(f"{'kernel':<20}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  agree")
    for name, fn in py.items():
        t_py = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3
        if name not in cy:
            print(f"{name:<20}{t_py:>12.2f}")
            continue
        t_cy = min(timeit.repeat(cy[name], number=1, repeat=args.repeat)) * 1e3
        agree = np.array_equal(np.asarray(fn()), np.asarray(cy[name]()))
        print(f"{name:<20}{t_py:>12.2f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x  {agree}")
        if not agree:
            raise SystemExit(f"{name}: backends disagree")


if __name__ == "__main__":
    main()
