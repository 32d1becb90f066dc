"""Vote labelling, ROC metrics, fold/time splits and deployment arithmetic."""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass
from datetime import date, datetime, timezone

import numpy as np

log = logging.getLogger(__name__)

MALWARE_FRACTION = (3, 10)          # >= 30% of engines alarming
TIME_SPLIT_BOUNDARY = date(2014, 7, 31)
TIME_SPLIT_MIN = date(2000, 1, 1)


class Label(str, enum.Enum):
    MALWARE = "malware"
    BENIGN = "benign"
    DISCARDED = "discarded"

    @property
    def target(self) -> int | None:
        return {Label.MALWARE: 1, Label.BENIGN: 0}.get(self)


@dataclass
class SampleRecord:
    file_id: str
    feature_row: int
    alarms: int
    engines: int
    compile_timestamp: int
    label: Label | None = None

    def __post_init__(self):
        if self.label is None:
            self.label = label_from_votes(self.alarms, self.engines)


@dataclass
class RocCurve:
    thresholds: np.ndarray   # first entry is +inf
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def label_from_votes(alarms: int, engines: int) -> Label:
    if engines <= 0:
        raise ValueError("engine count must be positive")
    if not 0 <= alarms <= engines:
        raise ValueError(f"alarms must lie in [0, {engines}], got {alarms}")
    num, den = MALWARE_FRACTION
    if alarms * den >= engines * num:   # integer form of alarms/engines >= 0.3
        return Label.MALWARE
    if alarms == 0:
        return Label.BENIGN
    return Label.DISCARDED


def roc_curve(scores, labels) -> RocCurve:
    """Exact ROC over every distinct score; tied scores move together.

    AUC by the trapezoid rule, which credits tied positive/negative pairs 1/2.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both positive and negative samples")

    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y == 1)[last_of_group]
    fp = np.cumsum(y == 0)[last_of_group]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last_of_group]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(thresholds, fpr, tpr, auc)


def tpr_at_fpr(roc: RocCurve, target_fpr: float = 0.001) -> float:
    """TPR of the best operating point whose FPR does not exceed the target.

    No interpolation between operating points.
    """
    ok = roc.fpr <= target_fpr
    return float(roc.tpr[ok].max()) if ok.any() else 0.0


def _limits(curve, grid):
    """Left and right limits of a curve's TPR at each grid FPR.

    Between operating points the curve is the straight segment the trapezoid
    AUC integrates; at an FPR with several points it jumps vertically.
    """
    xs, first = np.unique(curve.fpr, return_index=True)
    last = np.r_[first[1:] - 1, len(curve.fpr) - 1]
    lo_t, hi_t = curve.tpr[first], curve.tpr[last]
    pos = np.searchsorted(xs, grid, side="left")
    k = np.minimum(pos, len(xs) - 1)
    hit = xs[k] == grid
    j = np.clip(pos, 1, len(xs) - 1)
    x0, x1 = xs[j - 1], xs[j]
    inner = hi_t[j - 1] + (grid - x0) / (x1 - x0) * (lo_t[j] - hi_t[j - 1])
    return np.where(hit, lo_t[k], inner), np.where(hit, hi_t[k], inner)


def average_roc(curves, grid=None):
    """Vertical average of several ROC curves.

    Every curve is evaluated at each grid FPR (default: the union of all
    operating points) on both sides of any vertical jump, and the TPRs are
    averaged. Returns ``(fpr, tpr)`` of the averaged curve; a curve averaged
    with itself comes back with the same area.
    """
    if grid is None:
        grid = np.unique(np.concatenate([c.fpr for c in curves]))
    grid = np.asarray(grid, dtype=np.float64)
    lims = [_limits(c, grid) for c in curves]
    left = np.mean([l for l, _ in lims], axis=0)
    right = np.mean([r for _, r in lims], axis=0)
    fpr = np.repeat(grid, 2)
    tpr = np.column_stack([left, right]).ravel()
    keep = np.r_[True, (np.diff(fpr) != 0) | (np.diff(tpr) != 0)]
    return fpr[keep], tpr[keep]


def curve_auc(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr), np.asarray(tpr)
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def kfold_split(n: int, k: int = 4, seed: int = 0) -> list[np.ndarray]:
    """Shuffle ``range(n)`` and cut it into ``k`` folds whose sizes differ by at most one."""
    if k < 2 or n < k:
        raise ValueError(f"need n >= k >= 2, got n={n}, k={k}")
    perm = np.random.default_rng([seed, 2]).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def to_epoch(d) -> int:
    if isinstance(d, datetime):
        dt = d if d.tzinfo else d.replace(tzinfo=timezone.utc)
    else:
        dt = datetime(d.year, d.month, d.day, tzinfo=timezone.utc)
    return int(dt.timestamp())


def time_split(records, boundary=TIME_SPLIT_BOUNDARY, min_date=TIME_SPLIT_MIN, max_date=None):
    """Split records by compile timestamp.

    Records outside ``[min_date, max_date]`` are dropped (``max_date``
    defaults to today, UTC, and is inclusive of that whole day); the rest go
    to train when strictly before ``boundary`` and to test otherwise.
    """
    if max_date is None:
        max_date = datetime.now(timezone.utc).date()
    lo, cut = to_epoch(min_date), to_epoch(boundary)
    hi = to_epoch(max_date) + (86400 - 1 if not isinstance(max_date, datetime) else 0)
    train, test = [], []
    for rec in records:
        ts = rec.compile_timestamp
        if ts is None or ts < lo or ts > hi:
            continue
        (train if ts < cut else test).append(rec)
    if not train or not test:
        warnings.warn(f"time split produced train={len(train)} test={len(test)} records")
    return train, test


def expected_daily_false_positives(fpr: float, endpoints: float,
                                   new_binaries_per_endpoint_per_day: float = 5) -> float:
    if min(fpr, endpoints, new_binaries_per_endpoint_per_day) < 0:
        raise ValueError("inputs must be non-negative")
    return fpr * endpoints * new_binaries_per_endpoint_per_day
