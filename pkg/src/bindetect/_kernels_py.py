"""Pure-Python/numpy versions of the hot feature kernels.

Must produce bit-identical results to ``_kernels.pyx``: entropy is summed
sequentially over byte values 0..255 using the shared ``xlogx`` table, in the
same order the compiled loop uses.
"""
import re

import numpy as np

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_PRINTABLE_RUN = {}


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def byte_entropy_hist(data, window, step, xlogx, log2_window):
    """Return the 16x16 (entropy-bin, byte-bin) count grid, flattened row-major.

    ``window`` must be a multiple of ``step`` and ``len(data) >= window``.
    """
    buf = np.frombuffer(data, dtype=np.uint8)
    n_windows = 1 + (len(buf) - window) // step
    per = window // step
    n_blocks = n_windows + per - 1
    blocks = buf[: n_blocks * step].reshape(n_blocks, step).astype(np.int64)
    block_counts = np.bincount(
        (np.arange(n_blocks, dtype=np.int64)[:, None] * 256 + blocks).ravel(),
        minlength=n_blocks * 256,
    ).reshape(n_blocks, 256)
    counts = block_counts[:n_windows].copy()
    for k in range(1, per):
        counts += block_counts[k:k + n_windows]
    return _accumulate(counts, window, xlogx, log2_window)


def whole_entropy_hist(data, xlogx, log2_n):
    """Single window spanning all of ``data`` (short files)."""
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    return _accumulate(counts[None, :].astype(np.int64), len(data), xlogx, log2_n)


def _accumulate(counts, n, xlogx, log2_n):
    # cumsum is a strict left-to-right accumulate; keeps parity with the C loop
    s = np.cumsum(np.asarray(xlogx)[counts], axis=1)[:, -1]
    h = log2_n - s / n
    h = np.minimum(np.maximum(h, 0.0), 8.0)
    ebin = np.minimum(np.floor(h * 2.0).astype(np.int64), 15)
    nib = counts.reshape(-1, 16, 16).sum(axis=2)
    hist = np.zeros((16, 16), dtype=np.int64)
    np.add.at(hist, ebin, nib)
    return hist.ravel()


def string_hist(data, min_len):
    pattern = _PRINTABLE_RUN.get(min_len)
    if pattern is None:
        pattern = _PRINTABLE_RUN[min_len] = re.compile(rb"[\x20-\x7e]{%d,}" % min_len)
    out = np.zeros(256, dtype=np.int64)
    for m in pattern.finditer(data):
        out[fnv1a64(m.group()) & 0xFF] += 1
    return out
