"""Static feature extraction: four hashed/histogrammed 256-wide blocks.

Layout of the 1024-vector::

    [0, 256)     byte/entropy histogram
    [256, 512)   hashed imports
    [512, 768)   hashed PE metadata
    [768, 1024)  hashed printable strings
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .pe import PeSummary, extract_imports, parse_pe

WINDOW = 1024
STEP = 256
BLOCK = 256
N_FEATURES = 4 * BLOCK
MIN_STRING_LEN = 5

BLOCKS = ("bytes", "imports", "metadata", "strings")
BLOCK_SLICES = {name: slice(i * BLOCK, (i + 1) * BLOCK) for i, name in enumerate(BLOCKS)}

# c*log2(c) for every count a window can hold; shared by both kernel backends
# so their entropy sums agree bit for bit
XLOGX = np.array([0.0] + [c * math.log2(c) for c in range(1, WINDOW + 1)], dtype=np.float64)


def hash64(text: str | bytes) -> int:
    """FNV-1a, 64-bit."""
    if isinstance(text, str):
        text = text.encode("utf-8")
    return kernels.fnv1a64(text)


def window_entropy(window: bytes) -> float:
    """Shannon entropy in bits of the byte-value distribution of ``window``."""
    n = len(window)
    if n == 0:
        raise ValueError("entropy of an empty window is undefined")
    counts = np.bincount(np.frombuffer(bytes(window), dtype=np.uint8), minlength=256)
    s = 0.0
    for c in counts.tolist():
        s += XLOGX[c] if c <= WINDOW else c * math.log2(c)
    return min(max(math.log2(n) - s / n, 0.0), 8.0)


def window_count(n_bytes: int) -> int:
    if n_bytes < WINDOW:
        return 1
    return 1 + (n_bytes - WINDOW) // STEP


def byte_entropy_features(raw_bytes: bytes) -> np.ndarray:
    """Row-major 16x16 histogram of (window entropy bin, byte >> 4).

    Every byte of every 1024-byte window (stride 256) is counted once per
    window it falls in. Trailing bytes past the last full window are
    ignored; inputs shorter than one window form a single window.
    """
    data = bytes(raw_bytes)
    if not data:
        raise ValueError("raw_bytes must be non-empty")
    if len(data) < WINDOW:
        return kernels.whole_entropy_hist(data, XLOGX, math.log2(len(data)))
    return kernels.byte_entropy_hist(data, WINDOW, STEP, XLOGX, math.log2(WINDOW))


def import_features(imports) -> np.ndarray:
    out = np.zeros(BLOCK, dtype=np.int64)
    for dll, fn in imports:
        out[hash64(dll.lower() + ":" + fn) % BLOCK] += 1
    return out


def metadata_features(numeric_fields) -> np.ndarray:
    # negative values clamp to 0 so log10(1+x) stays defined
    out = np.zeros(BLOCK, dtype=np.float64)
    for name, value in numeric_fields:
        out[hash64(name) % BLOCK] += max(value, 0)
    return out


def string_features(raw_bytes: bytes) -> np.ndarray:
    """Counts of maximal printable-ASCII runs (length >= 5), hashed into 256 bins."""
    return kernels.string_hist(bytes(raw_bytes), MIN_STRING_LEN)


def raw_feature_blocks(raw_bytes: bytes, pe: PeSummary | None = None) -> np.ndarray:
    """The untransformed 1024-vector (counts and summed field values)."""
    if pe is None:
        pe = parse_pe(raw_bytes)
    return np.concatenate([
        byte_entropy_features(raw_bytes),
        import_features(extract_imports(pe)),
        metadata_features(pe.numeric_fields),
        string_features(raw_bytes),
    ]).astype(np.float64)


def log_transform(raw) -> np.ndarray:
    # libm log10 per element: numpy's vectorised log10 varies with the SIMD path
    return np.array([math.log10(1.0 + v) for v in np.asarray(raw, dtype=np.float64).tolist()])


def assemble_features(raw_bytes: bytes, pe: PeSummary | None = None) -> np.ndarray:
    """Full 1024-dim vector after the ``log10(1 + x)`` transform."""
    return log_transform(raw_feature_blocks(raw_bytes, pe))


def extract_file(path) -> tuple[np.ndarray, PeSummary]:
    with open(path, "rb") as fh:
        data = fh.read()
    pe = parse_pe(data)
    return assemble_features(data, pe), pe


def block_columns(mask) -> np.ndarray:
    """Column indices selected by a collection of block names, in layout order."""
    unknown = set(mask) - set(BLOCKS)
    if unknown:
        raise ValueError(f"unknown feature blocks: {sorted(unknown)}")
    if not mask:
        raise ValueError("feature mask must name at least one block")
    return np.concatenate([np.arange(N_FEATURES)[BLOCK_SLICES[b]] for b in BLOCKS if b in mask])
