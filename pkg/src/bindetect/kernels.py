"""Backend selection for the hot feature kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Set ``BINDETECT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("BINDETECT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

fnv1a64 = _impl.fnv1a64
byte_entropy_hist = _impl.byte_entropy_hist
whole_entropy_hist = _impl.whole_entropy_hist
string_hist = _impl.string_hist

__all__ = ["BACKEND", "fnv1a64", "byte_entropy_hist", "whole_entropy_hist", "string_hist"]
