"""Batch extract / train / evaluate / score runs over persisted artifacts."""
from __future__ import annotations

import csv
import glob
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import evaluation as ev
from . import nn, storage
from .features import BLOCKS, N_FEATURES, block_columns, extract_file

log = logging.getLogger(__name__)


class DataError(Exception):
    """Input data cannot support the requested run."""


@dataclass
class TrainConfig:
    mask: tuple[str, ...] = BLOCKS
    epochs: int = 200
    stop_train_error: float = 0.02
    batch_size: int = 256
    keep_prob: float = 0.8
    hidden: int = 1024
    lr: float = 1e-3
    seed: int = 0
    bandwidth: float = cal.DEFAULT_BANDWIDTH
    calibration_fraction: float = 0.25

    def layer_sizes(self) -> tuple[int, ...]:
        return (len(block_columns(self.mask)), self.hidden, self.hidden, 1)


def parse_mask(text) -> tuple[str, ...]:
    if isinstance(text, (list, tuple)):
        names = [str(t).strip() for t in text]
    else:
        names = [t.strip() for t in str(text).split(",") if t.strip()]
    if names == ["all"]:
        return BLOCKS
    block_columns(names)  # validates
    return tuple(b for b in BLOCKS if b in names)


# --------------------------------------------------------------------------
# extract

def expand_inputs(inputs) -> list[Path]:
    """Files named directly, files under directories (sorted), and glob matches (sorted)."""
    out = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out += sorted(q for q in p.rglob("*") if q.is_file())
        elif any(ch in str(item) for ch in "*?["):
            out += sorted(Path(q) for q in glob.glob(str(item), recursive=True) if Path(q).is_file())
        else:
            out.append(p)
    return out


def _extract_one(path):
    try:
        vec, pe = extract_file(path)
    except OSError as exc:
        return None, None, str(exc)
    return vec.astype(np.float32), pe.compile_timestamp, None


def extract(inputs, out_path, votes_path=None, workers=1) -> int:
    """Write the feature matrix and its sidecar; return the number of rows."""
    paths = expand_inputs(inputs)
    votes = storage.read_votes(votes_path) if votes_path else {}
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, paths, chunksize=8))
    else:
        results = [_extract_one(p) for p in paths]

    rows, side = [], []
    for path, (vec, pe_ts, err) in zip(paths, results):
        if err is not None:
            log.warning("skipping %s: %s", path, err)
            continue
        label, ts = "unknown", pe_ts
        vote = votes.get(path.name, votes.get(str(path)))
        if vote is not None:
            alarms, engines, vote_ts = vote
            label = ev.label_from_votes(alarms, engines).value
            if vote_ts is not None:
                ts = vote_ts
        rows.append(vec)
        side.append(storage.SidecarRow(str(path), label, ts))
    if not rows:
        raise DataError("no input file could be read; nothing written")
    storage.write_matrix(out_path, np.vstack(rows))
    storage.write_sidecar(storage.sidecar_path(out_path), side)
    log.info("wrote %d x %d feature matrix to %s", len(rows), N_FEATURES, out_path)
    return len(rows)


# --------------------------------------------------------------------------
# train

@dataclass
class Corpus:
    X: np.ndarray                  # all rows, float32 as stored
    rows: list[storage.SidecarRow]

    @classmethod
    def load(cls, matrix_path, labels_path=None):
        X = storage.read_matrix(matrix_path)
        rows = storage.read_sidecar(labels_path or storage.sidecar_path(matrix_path))
        if len(rows) != len(X):
            raise DataError(f"matrix has {len(X)} rows but the sidecar lists {len(rows)}")
        return cls(X, rows)

    def labeled(self) -> np.ndarray:
        """Row indices whose vote label is malware or benign."""
        return np.array([i for i, r in enumerate(self.rows) if r.label in ("malware", "benign")],
                        dtype=np.int64)

    def targets(self, idx) -> np.ndarray:
        return np.array([1.0 if self.rows[i].label == "malware" else 0.0 for i in idx])

    def inputs(self, idx, mask) -> np.ndarray:
        return self.X[np.ix_(idx, block_columns(mask))].astype(np.float64)


def _require_both_classes(y, what):
    if len(np.unique(y)) < 2:
        raise DataError(f"{what} contains a single class; need both benign and malware samples")


def _calibration_split(y, fraction, seed):
    """Stratified holdout: ``fraction`` of each class, leaving at least one for training."""
    rng = np.random.default_rng([seed, 3])
    hold = []
    for c in (0.0, 1.0):
        members = rng.permutation(np.flatnonzero(y == c))
        k = min(int(math.ceil(fraction * len(members))), len(members) - 1)
        hold.extend(members[:max(k, 0)].tolist())
    hold = np.sort(np.array(hold, dtype=np.int64))
    keep = np.setdiff1d(np.arange(len(y)), hold)
    return keep, hold


def fit(X, y, cfg: TrainConfig, seed=None) -> nn.TrainResult:
    seed = cfg.seed if seed is None else seed
    _require_both_classes(y, "training data")
    model = nn.init_glorot((X.shape[1], cfg.hidden, cfg.hidden, 1), seed=seed,
                           keep_prob=cfg.keep_prob)
    return nn.train(model, X, y, epochs=cfg.epochs, stop_train_error=cfg.stop_train_error,
                    batch_size=cfg.batch_size, seed=seed, lr=cfg.lr)


def train(matrix_path, model_path, cfg: TrainConfig, labels_path=None) -> dict:
    corpus = Corpus.load(matrix_path, labels_path)
    idx = corpus.labeled()
    y = corpus.targets(idx)
    _require_both_classes(y, "labeled data")
    X = corpus.inputs(idx, cfg.mask)

    keep, hold = _calibration_split(y, cfg.calibration_fraction, cfg.seed)
    result = fit(X[keep], y[keep], cfg)
    model = result.model

    cal_scores, cal_y = nn.predict(model, X[hold]), y[hold]
    for c, name in ((0.0, "benign"), (1.0, "malware")):
        if not (cal_y == c).any():
            log.warning("no held-out %s samples; calibrating that class on training scores", name)
            train_scores = nn.predict(model, X[keep][y[keep] == c])
            cal_scores = np.r_[cal_scores, train_scores]
            cal_y = np.r_[cal_y, np.full(len(train_scores), c)]
    calib = cal.fit_calibration(cal_scores, cal_y, cfg.bandwidth)

    meta = {
        "mask": list(cfg.mask),
        "epochs_run": result.epochs_run,
        "stopped_early": result.stopped_early,
        "final_loss": result.loss_history[-1],
        "n_train": int(len(keep)),
        "n_calibration": int(len(hold)),
        "hyperparameters": {
            "epochs": cfg.epochs, "stop_train_error": cfg.stop_train_error,
            "batch_size": cfg.batch_size, "lr": cfg.lr, "hidden": cfg.hidden,
        },
    }
    storage.save_model(model_path, model, calib, meta)

    base = Path(str(model_path))
    with open(str(base) + ".train.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for i, value in enumerate(result.loss_history, start=1):
            w.writerow([i, repr(value)])
    all_scores = nn.predict(model, corpus.X[:, block_columns(cfg.mask)].astype(np.float64))
    with open(str(base) + ".scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file_id", "label", "raw_score"])
        for r, s in zip(corpus.rows, all_scores):
            w.writerow([r.path, r.label, repr(float(s))])
    return meta


# --------------------------------------------------------------------------
# evaluate

def write_roc(path, roc: ev.RocCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def read_roc(path) -> ev.RocCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["threshold"]) for r in rows])
    f = np.array([float(r["fpr"]) for r in rows])
    p = np.array([float(r["tpr"]) for r in rows])
    return ev.RocCurve(t, f, p, ev.curve_auc(f, p))


def _summary_entry(roc):
    return {"auc": roc.auc, "tpr_at_0.001": ev.tpr_at_fpr(roc, 0.001)}


def _write_summary(outdir, summary):
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(outdir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "auc", "tpr_at_0.001"])
        for name, entry in summary["curves"].items():
            w.writerow([name, repr(entry["auc"]), repr(entry["tpr_at_0.001"])])


@dataclass
class _TimedRow:
    position: int
    compile_timestamp: int | None


def evaluate(matrix_path, outdir, cfg: TrainConfig, mode="kfold", folds=4,
             split_date=ev.TIME_SPLIT_BOUNDARY, min_date=ev.TIME_SPLIT_MIN, max_date=None,
             labels_path=None) -> dict:
    corpus = Corpus.load(matrix_path, labels_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    idx = corpus.labeled()
    y_all = corpus.targets(idx)
    _require_both_classes(y_all, "labeled data")
    X_all = corpus.inputs(idx, cfg.mask)

    scored = []   # (path, split name, label, score)
    curves = {}
    if mode == "kfold":
        fold_idx = ev.kfold_split(len(idx), folds, cfg.seed)
        fold_rocs = []
        for f, test in enumerate(fold_idx):
            train_ = np.setdiff1d(np.arange(len(idx)), test)
            _require_both_classes(y_all[test], f"test fold {f}")
            result = fit(X_all[train_], y_all[train_], cfg, seed=cfg.seed * 1000 + f + 1)
            s = nn.predict(result.model, X_all[test])
            roc = ev.roc_curve(s, y_all[test])
            write_roc(outdir / f"roc_fold{f}.csv", roc)
            curves[f"fold{f}"] = _summary_entry(roc)
            fold_rocs.append(roc)
            scored += [(corpus.rows[idx[i]].path, f"fold{f}", int(y_all[i]), float(v))
                       for i, v in zip(test, s)]
            log.info("fold %d: auc=%.6f epochs=%d", f, roc.auc, result.epochs_run)
        grid, tpr = ev.average_roc(fold_rocs)
        avg = ev.RocCurve(np.full(len(grid), np.nan), grid, tpr, ev.curve_auc(grid, tpr))
        write_roc(outdir / "roc_average.csv", avg)
        curves["average"] = _summary_entry(avg)
        mean_auc = float(np.mean([r.auc for r in fold_rocs]))
        mean_tpr = float(np.mean([ev.tpr_at_fpr(r) for r in fold_rocs]))
    elif mode == "timesplit":
        recs = [_TimedRow(j, corpus.rows[i].compile_timestamp) for j, i in enumerate(idx)]
        train_recs, test_recs = ev.time_split(recs, split_date, min_date, max_date)
        tr = np.array([r.position for r in train_recs], dtype=np.int64)
        te = np.array([r.position for r in test_recs], dtype=np.int64)
        _require_both_classes(y_all[tr], "time-split train side")
        _require_both_classes(y_all[te], "time-split test side")
        result = fit(X_all[tr], y_all[tr], cfg)
        s = nn.predict(result.model, X_all[te])
        roc = ev.roc_curve(s, y_all[te])
        write_roc(outdir / "roc_timesplit.csv", roc)
        curves["timesplit"] = _summary_entry(roc)
        scored += [(corpus.rows[idx[i]].path, "test", int(y_all[i]), float(v))
                   for i, v in zip(te, s)]
        mean_auc, mean_tpr = roc.auc, ev.tpr_at_fpr(roc)
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")

    with open(outdir / "scores.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file_id", "split", "label", "raw_score"])
        for row in scored:
            w.writerow([row[0], row[1], row[2], repr(row[3])])
    summary = {"mode": mode, "auc": mean_auc, "tpr_at_0.001": mean_tpr, "curves": curves}
    _write_summary(outdir, summary)
    return summary


# --------------------------------------------------------------------------
# score

def score(model_path, files, base_rate, out_path) -> list[tuple[str, float, float]]:
    model, calib, meta = storage.load_model(model_path)
    if calib is None:
        raise DataError(f"{model_path} carries no calibration data")
    cols = block_columns(meta.get("mask", BLOCKS))
    names, rows = [], []
    for p in expand_inputs(files):
        try:
            vec, _ = extract_file(p)
        except OSError as exc:
            log.warning("skipping %s: %s", p, exc)
            continue
        names.append(str(p))
        # round through float32 exactly as the stored matrix does
        rows.append(vec.astype(np.float32))
    if not rows:
        raise DataError("no input file could be scored")
    raw = nn.predict(model, np.vstack(rows)[:, cols].astype(np.float64))
    threat = cal.threat_score(raw, calib, base_rate)
    results = [(n, float(r), float(t)) for n, r, t in zip(names, raw, np.atleast_1d(threat))]
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["file_id", "raw_score", "threat_score"])
        for fid, raw, threat in results:
            w.writerow([fid, repr(raw), repr(threat)])
    return results
