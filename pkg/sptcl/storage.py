"""File layer: feature/label files (CSV and binary), model archives, JSON-lines records.

Binary features: magic ``SPTF``, u32 version, u64 n, u64 m, then ``n * m``
little-endian f64 in sample-major order. Binary labels: magic ``SPTL``,
u32 version, u64 n, then ``n`` little-endian i64. CSV features hold one sample
per line; CSV labels one integer per line. ``-1`` marks an unlabeled sample.
Error positions are 0-based (row = sample, col = feature).
"""

import csv
import json
import logging
import math
import struct
from pathlib import Path

import numpy as np

from sptcl.datamodel import Dataset, Hyperparams, KernelSpec
from sptcl.errors import (
    DimensionMismatch,
    FormatError,
    InputError,
    MalformedHeader,
    NonFiniteValue,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FEATURES_MAGIC = b"SPTF"
LABELS_MAGIC = b"SPTL"
_FEATURES_HEADER = struct.Struct("<4sIQQ")
_LABELS_HEADER = struct.Struct("<4sIQ")

FORMATS = ("csv", "binary")
_SUFFIX_FORMATS = {
    ".csv": "csv",
    ".txt": "csv",
    ".bin": "binary",
    ".sptf": "binary",
    ".sptl": "binary",
}


def infer_format(path: str | Path, fmt: str | None = None) -> str:
    """Return ``fmt`` if given, otherwise guess it from the file suffix."""
    if fmt is not None:
        if fmt not in FORMATS:
            raise InputError(f"Unknown file format {fmt!r}; expected one of {FORMATS}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix not in _SUFFIX_FORMATS:
        raise InputError(f"Cannot infer the format of {path}; pass csv or binary explicitly")
    return _SUFFIX_FORMATS[suffix]


def _existing(path: str | Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"File not found: {path}")
    return path


# --------------- Features ---------------

def load_features(path: str | Path, fmt: str | None = None) -> Dataset:
    """Load a features-only Dataset (m x n). Labels are bound later via ``attach_labels``."""
    path = _existing(path)
    if infer_format(path, fmt) == "csv":
        samples = _read_csv_features(path)
    else:
        samples = _read_binary_features(path)
    ds = Dataset(samples.T)
    logger.debug("Loaded %s: m=%d, n=%d", path, ds.n_features, ds.n_samples)
    return ds


def save_features(features, path: str | Path, fmt: str | None = None) -> None:
    """Write a feature matrix (m x n) or a Dataset's features."""
    if isinstance(features, Dataset):
        features = features.features
    samples = np.asarray(features, dtype=np.float64).T
    path = Path(path)
    if infer_format(path, fmt) == "csv":
        with path.open("w", newline="") as fh:
            for row in samples:
                fh.write(",".join(f"{value:.17g}" for value in row) + "\n")
    else:
        n, m = samples.shape
        with path.open("wb") as fh:
            fh.write(_FEATURES_HEADER.pack(FEATURES_MAGIC, FORMAT_VERSION, n, m))
            fh.write(np.ascontiguousarray(samples, dtype="<f8").tobytes())


def _read_csv_features(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with path.open(newline="") as fh:
        for row_index, row in enumerate(csv.reader(fh)):
            if not any(cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionMismatch(
                    f"Expected {width} values, got {len(row)}", row=row_index, col=min(width, len(row))
                )
            values = []
            for col_index, cell in enumerate(row):
                try:
                    value = float(cell)
                except ValueError:
                    raise FormatError(f"Cannot parse {cell.strip()!r} as a number", row_index, col_index) from None
                if not math.isfinite(value):
                    raise NonFiniteValue(f"Non-finite value {cell.strip()!r}", row_index, col_index)
                values.append(value)
            rows.append(values)
    if not rows:
        raise InputError(f"No samples in {path}")
    return np.array(rows, dtype=np.float64)


def _read_binary_features(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if len(data) < _FEATURES_HEADER.size:
        raise MalformedHeader(f"{path} is too short for a features header")
    magic, version, n, m = _FEATURES_HEADER.unpack_from(data)
    if magic != FEATURES_MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}, expected {FEATURES_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    expected = _FEATURES_HEADER.size + 8 * n * m
    if len(data) != expected:
        raise DimensionMismatch(f"{path}: header declares n={n}, m={m} ({expected} bytes) but file has {len(data)}")
    samples = np.frombuffer(data, dtype="<f8", count=n * m, offset=_FEATURES_HEADER.size)
    samples = samples.reshape(n, m).astype(np.float64)
    bad = np.argwhere(~np.isfinite(samples))
    if bad.size:
        row, col = (int(i) for i in bad[0])
        raise NonFiniteValue("Non-finite value", row, col)
    return samples


# --------------- Labels ---------------

def load_labels(path: str | Path, fmt: str | None = None) -> np.ndarray:
    """Load an int64 label vector (``-1`` = unlabeled)."""
    path = _existing(path)
    if infer_format(path, fmt) == "csv":
        labels = []
        with path.open() as fh:
            for row_index, line in enumerate(fh):
                text = line.strip()
                if not text:
                    continue
                try:
                    labels.append(int(text))
                except ValueError:
                    raise FormatError(f"Cannot parse {text!r} as an integer label", row_index, 0) from None
        return np.array(labels, dtype=np.int64)

    data = path.read_bytes()
    if len(data) < _LABELS_HEADER.size:
        raise MalformedHeader(f"{path} is too short for a labels header")
    magic, version, n = _LABELS_HEADER.unpack_from(data)
    if magic != LABELS_MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}, expected {LABELS_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeader(f"{path}: unsupported version {version}")
    if len(data) != _LABELS_HEADER.size + 8 * n:
        raise DimensionMismatch(f"{path}: header declares n={n} but file has {len(data)} bytes")
    return np.frombuffer(data, dtype="<i8", count=n, offset=_LABELS_HEADER.size).astype(np.int64)


def save_labels(labels, path: str | Path, fmt: str | None = None) -> None:
    """Write an integer vector; booleans are written as 0/1."""
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    path = Path(path)
    if infer_format(path, fmt) == "csv":
        path.write_text("".join(f"{int(label)}\n" for label in labels))
    else:
        with path.open("wb") as fh:
            fh.write(_LABELS_HEADER.pack(LABELS_MAGIC, FORMAT_VERSION, labels.shape[0]))
            fh.write(labels.astype("<i8").tobytes())


# --------------- Model archives ---------------

def save_model(state, hp: Hyperparams, path: str | Path) -> None:
    """Store a fitted ModelState and the hyper-parameters it was trained with (.npz)."""
    arrays = {"W": state.W, "v": state.v, "P": state.P}
    if state.basis is not None:
        arrays["basis"] = state.basis
    meta = {
        "lam": state.lam,
        "mode": state.mode,
        "kernel": str(state.kernel) if state.kernel is not None else None,
        "hyperparams": hp.to_dict(),
    }
    with Path(path).open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path: str | Path):
    """Inverse of ``save_model``: returns ``(ModelState, Hyperparams)``."""
    from sptcl.solver import ModelState

    path = _existing(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            arrays = {name: archive[name] for name in archive.files if name != "meta"}
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"{path} is not a model archive: {exc}") from exc
    state = ModelState(
        W=arrays["W"],
        v=arrays["v"],
        P=arrays["P"],
        lam=float(meta["lam"]),
        mode=meta["mode"],
        basis=arrays.get("basis"),
        kernel=KernelSpec.parse(meta["kernel"]) if meta["kernel"] else None,
    )
    return state, Hyperparams.from_dict(meta["hyperparams"])


# --------------- JSON / JSON-lines ---------------

def write_records(records, path: str | Path) -> None:
    """One JSON object per line; ``records`` are dicts or objects with ``to_dict()``."""
    with Path(path).open("w") as fh:
        for record in records:
            payload = record.to_dict() if hasattr(record, "to_dict") else record
            fh.write(json.dumps(payload, sort_keys=False) + "\n")


def read_records(path: str | Path) -> list[dict]:
    path = _existing(path)
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    path = _existing(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc.msg}", exc.lineno - 1) from exc
