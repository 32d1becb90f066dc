"""Independent reference computations used to freeze expected values.

Deliberately naive: plain loops over Python ints and ``math``, no numpy and
no imports from the package under test.
"""
import math
import re
from collections import Counter

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) % (1 << 64)
    return h


def entropy_bits(window):
    n = len(window)
    h = 0.0
    for c in Counter(window).values():
        p = c / n
        h -= p * math.log2(p)
    return h


def byte_entropy_hist(data):
    """Brute-force histogram: walk every window, pair every byte with its H."""
    hist = [[0] * 16 for _ in range(16)]
    if len(data) < 1024:
        windows = [data]
    else:
        windows = [data[o:o + 1024] for o in range(0, len(data) - 1024 + 1, 256)]
    for w in windows:
        h = entropy_bits(w)
        e = min(max(int(h // 0.5), 0), 15)
        for byte in w:
            hist[e][byte // 16] += 1
    return [c for row in hist for c in row]


def printable_runs(data):
    return [m.group() for m in re.finditer(rb"[\x20-\x7e]{5,}", data)]


def string_hist(data):
    out = [0] * 256
    for run in printable_runs(data):
        out[fnv1a64(run) % 256] += 1
    return out


def import_hist(imports):
    out = [0] * 256
    for dll, fn in imports:
        out[fnv1a64(dll.lower() + ":" + fn) % 256] += 1
    return out


def metadata_hist(fields):
    out = [0] * 256
    for name, value in fields:
        out[fnv1a64(name) % 256] += max(value, 0)
    return out


def concordant_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def kde_pdf(samples, x, bw):
    """Direct sum over the reflected sample set, one point at a time."""
    total = 0.0
    for s in samples:
        for t in (s, -s, 2.0 - s):
            u = (x - t) / bw
            if abs(u) <= 1.0:
                total += 0.75 * (1.0 - u * u)
    return total / (len(samples) * bw)


def simpson(f_values, a, b):
    """Composite Simpson on an odd number of equally spaced samples."""
    n = len(f_values) - 1
    assert n % 2 == 0
    h = (b - a) / n
    return h / 3 * (f_values[0] + f_values[-1] + 4 * sum(f_values[1:-1:2]) + 2 * sum(f_values[2:-1:2]))


def tpr_at_fpr(scores, labels, target):
    """Best TPR over thresholds "score >= t" whose FPR stays within target."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    best = 0.0
    for t in set(scores):
        fp = sum(1 for s in neg if s >= t)
        if fp / len(neg) <= target:
            best = max(best, sum(1 for s in pos if s >= t) / len(pos))
    return best
