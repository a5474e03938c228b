"""On-disk formats used by the command-line surface.

Arrays are little-endian fixed-width binaries with a one-line text header::

    CAREDS v1 dtype=<f32|f64|u32> shape=<d0[,d1]>\\n

followed by the raw row-major payload. A dataset directory holds meta.json
plus features.f32, prototypes.f32, observed_labels.u32 and (for synthetic
data) true_labels.u32. Everything is byte-reproducible given the same
content, and loadable from any language that can read the header line.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .core import Dataset

ARRAY_MAGIC = "CAREDS v1"

_DTYPES = {"f32": "<f4", "f64": "<f8", "u32": "<u4"}
_CODES = {np.dtype("<f4"): "f32", np.dtype("<f8"): "f64", np.dtype("<u4"): "u32"}


class ArrayFormatError(ValueError):
    pass


def write_array(path: str | os.PathLike, arr: np.ndarray, code: str) -> None:
    if code not in _DTYPES:
        raise ArrayFormatError(f"unknown dtype code {code!r}")
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    shape = ",".join(str(s) for s in data.shape)
    with open(path, "wb") as fh:
        fh.write(f"{ARRAY_MAGIC} dtype={code} shape={shape}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_array(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 4 or " ".join(parts[:2]) != ARRAY_MAGIC:
            raise ArrayFormatError(f"{path}: malformed header {header!r}")
        fields = dict(p.split("=", 1) for p in parts[2:])
        code = fields.get("dtype")
        if code not in _DTYPES:
            raise ArrayFormatError(f"{path}: unknown dtype {code!r}")
        shape = tuple(int(x) for x in fields["shape"].split(","))
        expected = int(np.prod(shape)) * np.dtype(_DTYPES[code]).itemsize
        payload = fh.read()
        if len(payload) != expected:
            raise ArrayFormatError(
                f"{path}: payload is {len(payload)} bytes, expected {expected}")
        return np.frombuffer(payload, dtype=_DTYPES[code]).reshape(shape)


def save_dataset(dirpath: str | os.PathLike, d: Dataset,
                 meta_extra: dict | None = None) -> None:
    out = Path(dirpath)
    out.mkdir(parents=True, exist_ok=True)
    write_array(out / "features.f32", d.features, "f32")
    write_array(out / "prototypes.f32", d.prototypes, "f32")
    write_array(out / "observed_labels.u32", d.observed_labels, "u32")
    if d.true_labels is not None:
        write_array(out / "true_labels.u32", d.true_labels, "u32")
    meta = {
        "format": ARRAY_MAGIC,
        "num_samples": d.num_samples,
        "num_classes": d.num_classes,
        "feature_dim": d.feature_dim,
        "has_true_labels": d.true_labels is not None,
    }
    if meta_extra:
        meta.update(meta_extra)
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(dirpath: str | os.PathLike) -> Dataset:
    src = Path(dirpath)
    with open(src / "meta.json") as fh:
        meta = json.load(fh)
    features = read_array(src / "features.f32").astype(np.float64)
    prototypes = read_array(src / "prototypes.f32").astype(np.float64)
    observed = read_array(src / "observed_labels.u32").astype(np.int64)
    true_path = src / "true_labels.u32"
    true_labels = None
    if meta.get("has_true_labels") and true_path.exists():
        true_labels = read_array(true_path).astype(np.int64)
    d = Dataset(features=features, observed_labels=observed,
                prototypes=prototypes, true_labels=true_labels)
    if d.num_samples != meta["num_samples"] or d.num_classes != meta["num_classes"]:
        raise ArrayFormatError(
            f"{dirpath}: meta.json shape does not match array files")
    return d
