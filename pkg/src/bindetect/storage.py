"""On-disk formats.

Feature matrix (``.bnsf``)::

    b"BNSF" | version u32 | rows u64 | cols u64 | rows*cols float32   (all little-endian)

Sidecar (``.bnsf.tsv``): header ``path<TAB>label<TAB>compile_timestamp``, one
line per matrix row.

Model (``BNSM1``): a single JSON document. Parameters are stored as
base64-encoded little-endian float64 blobs next to their shapes; the
calibration score samples ride along in the same document.
"""
from __future__ import annotations

import base64
import csv
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .calibration import CalibrationModel
from .nn import MlpModel

MATRIX_MAGIC = b"BNSF"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIQQ")

MODEL_FORMAT = "BNSM1"

VOTE_COLUMNS = ("file_id", "alarms", "engines", "compile_timestamp")


class FormatError(ValueError):
    """A file is corrupt or was written by an incompatible version."""


def write_matrix(path, X) -> None:
    X = np.ascontiguousarray(X, dtype="<f4")
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, *X.shape))
        fh.write(X.tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _MATRIX_HEADER.size:
        raise FormatError(f"{path}: too short for a feature matrix header")
    magic, version, rows, cols = _MATRIX_HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"{path}: matrix format version {version} unsupported "
                          f"(expected {MATRIX_VERSION})")
    body = data[_MATRIX_HEADER.size:]
    if len(body) != rows * cols * 4:
        raise FormatError(f"{path}: expected {rows}x{cols} float32 payload, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(rows, cols).astype(np.float32)


@dataclass
class SidecarRow:
    path: str
    label: str
    compile_timestamp: int | None


def sidecar_path(matrix_path) -> Path:
    return Path(str(matrix_path) + ".tsv")


def write_sidecar(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("path\tlabel\tcompile_timestamp\n")
        for r in rows:
            ts = "" if r.compile_timestamp is None else str(r.compile_timestamp)
            fh.write(f"{r.path}\t{r.label}\t{ts}\n")


def read_sidecar(path) -> list[SidecarRow]:
    rows = []
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["path", "label", "compile_timestamp"]:
            raise FormatError(f"{path}: unexpected sidecar header {header}")
        for line in fh:
            p, label, ts = line.rstrip("\n").split("\t")
            rows.append(SidecarRow(p, label, int(ts) if ts else None))
    return rows


def parse_timestamp(text: str) -> int | None:
    """Epoch seconds from an integer or an ISO-8601 date/datetime (UTC if naive)."""
    text = text.strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())


def read_votes(path) -> dict[str, tuple[int, int, int | None]]:
    """file_id -> (alarms, engines, compile_timestamp) from a votes CSV."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(VOTE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"{path}: votes CSV lacks columns {sorted(missing)}")
        for row in reader:
            out[row["file_id"]] = (int(row["alarms"]), int(row["engines"]),
                                   parse_timestamp(row["compile_timestamp"]))
    return out


def _encode(arr) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(obj) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def save_model(path, model: MlpModel, calibration: CalibrationModel | None = None,
               metadata: dict | None = None) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "layer_sizes": list(model.layer_sizes),
        "keep_prob": model.keep_prob,
        "seed": model.rng_seed,
        "metadata": metadata or {},
        "params": {name: _encode(p) for name, p in model.params().items()},
        "calibration": None if calibration is None else {
            "bandwidth": calibration.bandwidth,
            "benign_scores": _encode(calibration.benign_scores),
            "malware_scores": _encode(calibration.malware_scores),
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_model(path) -> tuple[MlpModel, CalibrationModel | None, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a model file ({exc})") from None
    fmt = doc.get("format") if isinstance(doc, dict) else None
    if fmt != MODEL_FORMAT:
        raise FormatError(f"{path}: model format version {fmt!r} unsupported (expected {MODEL_FORMAT})")
    try:
        sizes = tuple(doc["layer_sizes"])
        params = {k: _decode(v) for k, v in doc["params"].items()}
        n = len(sizes) - 1
        model = MlpModel(
            sizes,
            [params[f"W{i}"] for i in range(1, n + 1)],
            [params[f"b{i}"] for i in range(1, n + 1)],
            [params[f"a{i}"] for i in range(1, n)],
            keep_prob=doc["keep_prob"],
            rng_seed=doc["seed"],
        )
        for i, w in enumerate(model.weights):
            if w.shape != (sizes[i + 1], sizes[i]):
                raise FormatError(f"{path}: W{i + 1} has shape {w.shape}")
        cal = doc.get("calibration")
        calibration = None if cal is None else CalibrationModel(
            _decode(cal["benign_scores"]), _decode(cal["malware_scores"]), cal["bandwidth"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: corrupt model file ({exc})") from None
    return model, calibration, doc.get("metadata", {})
