"""Score calibration: per-class Epanechnikov KDE on [0, 1] with reflected
samples, combined with an assumed malware base rate through Bayes' rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_BANDWIDTH = 0.01


def epanechnikov(u):
    u = np.asarray(u, dtype=np.float64)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _augment(samples):
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("KDE needs at least one sample")
    if (s < 0).any() or (s > 1).any():
        raise ValueError("KDE samples must lie in [0, 1]")
    return np.sort(np.concatenate([s, -s, 2.0 - s])), s.size


def _density(aug, n, x, bandwidth):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if (x < 0).any() or (x > 1).any():
        raise ValueError("density is only defined on [0, 1]")
    lo = np.searchsorted(aug, x - bandwidth, side="left")
    hi = np.searchsorted(aug, x + bandwidth, side="right")
    width = int((hi - lo).max(initial=0))
    out = np.zeros(x.shape)
    # gather each point's in-support samples into a padded (len(x), width) block
    for start in range(0, len(x), 4096):
        sl = slice(start, start + 4096)
        idx = lo[sl, None] + np.arange(width)
        valid = idx < hi[sl, None]
        near = aug[np.minimum(idx, len(aug) - 1)]
        k = np.where(valid, epanechnikov((x[sl, None] - near) / bandwidth), 0.0)
        out[sl] = k.sum(axis=1)
    return out / (n * bandwidth)


def kde_pdf(samples, x, bandwidth=DEFAULT_BANDWIDTH):
    """Density at ``x`` (scalar or array) from samples reflected about 0 and 1.

    The normaliser uses the original sample count, so the mirrored copies
    fold the mass that would leak outside [0, 1] back inside.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    aug, n = _augment(samples)
    out = _density(aug, n, x, bandwidth)
    return float(out[0]) if np.ndim(x) == 0 else out


def bayes_threat(p_malware, p_benign, base_rate):
    """Posterior P(malware | score) from the two class densities.

    Where both densities vanish the posterior is 0/0; the prior is returned.
    """
    base_rate = np.asarray(base_rate, dtype=np.float64)
    if not ((base_rate > 0.0) & (base_rate < 1.0)).all():
        raise ValueError(f"base rate must lie in (0, 1), got {base_rate}")
    pm = np.asarray(p_malware, dtype=np.float64)
    pb = np.asarray(p_benign, dtype=np.float64)
    num = pm * base_rate
    den = num + pb * (1.0 - base_rate)
    with np.errstate(invalid="ignore", divide="ignore"):
        post = np.where(den > 0, num / np.where(den > 0, den, 1.0), base_rate)
    return float(post) if post.ndim == 0 else post


@dataclass(frozen=True)
class CalibrationModel:
    benign_scores: np.ndarray
    malware_scores: np.ndarray
    bandwidth: float = DEFAULT_BANDWIDTH

    def __post_init__(self):
        for name in ("benign_scores", "malware_scores"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.size == 0:
                raise ValueError(f"{name} is empty")
            if (arr < 0).any() or (arr > 1).any():
                raise ValueError(f"{name} must lie in [0, 1]")
            object.__setattr__(self, name, arr)
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    def densities(self, s):
        return (kde_pdf(self.malware_scores, s, self.bandwidth),
                kde_pdf(self.benign_scores, s, self.bandwidth))


def fit_calibration(scores, labels, bandwidth=DEFAULT_BANDWIDTH) -> CalibrationModel:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    return CalibrationModel(scores[labels == 0], scores[labels == 1], bandwidth)


def threat_score(s, calib: CalibrationModel, base_rate: float):
    """P(malware | score s) under ``base_rate`` = P(malware). Vectorised over ``s``."""
    pm, pb = calib.densities(s)
    return bayes_threat(pm, pb, base_rate)
