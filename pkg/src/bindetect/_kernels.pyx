# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled feature kernels. Mirrors ``_kernels_py`` bit for bit."""
import numpy as np

from libc.math cimport floor
from libc.stdint cimport int64_t, uint64_t

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


def fnv1a64(const unsigned char[::1] data):
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h = (h ^ data[i]) * FNV_PRIME
    return h


cdef inline int _entropy_bin(int64_t* counts, double n, const double[::1] xlogx,
                             double log2_n) nogil:
    cdef double s = 0.0
    cdef double h
    cdef int v, e
    for v in range(256):
        s += xlogx[counts[v]]
    h = log2_n - s / n
    if h < 0.0:
        h = 0.0
    if h > 8.0:
        h = 8.0
    e = <int>floor(h * 2.0)
    if e > 15:
        e = 15
    return e


cdef inline void _add_window(int64_t[::1] hist, int64_t* counts, int e) nogil:
    cdef int hi, lo
    cdef int64_t acc
    for hi in range(16):
        acc = 0
        for lo in range(16):
            acc += counts[hi * 16 + lo]
        hist[e * 16 + hi] += acc


def byte_entropy_hist(const unsigned char[::1] data, Py_ssize_t window,
                      Py_ssize_t step, const double[::1] xlogx, double log2_window):
    cdef int64_t counts[256]
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t off, i
    cdef int e
    out = np.zeros(256, dtype=np.int64)
    cdef int64_t[::1] hist = out
    with nogil:
        for i in range(256):
            counts[i] = 0
        for i in range(window):
            counts[data[i]] += 1
        off = 0
        while True:
            e = _entropy_bin(counts, <double>window, xlogx, log2_window)
            _add_window(hist, counts, e)
            if off + step + window > n:
                break
            for i in range(off, off + step):
                counts[data[i]] -= 1
            for i in range(off + window, off + window + step):
                counts[data[i]] += 1
            off += step
    return out


def whole_entropy_hist(const unsigned char[::1] data, const double[::1] xlogx,
                       double log2_n):
    cdef int64_t counts[256]
    cdef Py_ssize_t i
    out = np.zeros(256, dtype=np.int64)
    cdef int64_t[::1] hist = out
    with nogil:
        for i in range(256):
            counts[i] = 0
        for i in range(data.shape[0]):
            counts[data[i]] += 1
        _add_window(hist, counts,
                    _entropy_bin(counts, <double>data.shape[0], xlogx, log2_n))
    return out


def string_hist(const unsigned char[::1] data, Py_ssize_t min_len):
    cdef Py_ssize_t i, run = 0
    cdef uint64_t h = FNV_OFFSET
    cdef unsigned char c
    out = np.zeros(256, dtype=np.int64)
    cdef int64_t[::1] hist = out
    with nogil:
        for i in range(data.shape[0]):
            c = data[i]
            if 0x20 <= c <= 0x7E:
                h = (h ^ c) * FNV_PRIME
                run += 1
            else:
                if run >= min_len:
                    hist[h & 0xFF] += 1
                run = 0
                h = FNV_OFFSET
        if run >= min_len:
            hist[h & 0xFF] += 1
    return out
