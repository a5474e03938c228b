"""Writers for the consensus pipeline's on-disk interchange formats.

Implemented here independently of the consuming library; the formats are
the contract. Arrays: one ASCII header line ``CAREDS v1 dtype=<code>
shape=<d0[,d1]>`` then raw little-endian row-major payload. Confidence
matrices: header ``CARECONF v1 N=<n> C=<c> fmt=<csv|f32le>``, optional
``#`` comment lines, then the rows.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

ARRAY_MAGIC = "CAREDS v1"
CONF_MAGIC = "CARECONF v1"

_DTYPES = {"f32": "<f4", "u32": "<u4"}


def write_array(path, arr, code: str) -> None:
    data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
    shape = ",".join(str(s) for s in data.shape)
    with open(path, "wb") as fh:
        fh.write(f"{ARRAY_MAGIC} dtype={code} shape={shape}\n".encode("ascii"))
        fh.write(data.tobytes())


def write_confidence(path, probs: np.ndarray, comments: tuple[str, ...] = ()) -> None:
    n, c = probs.shape
    with open(path, "wb") as fh:
        fh.write(f"{CONF_MAGIC} N={n} C={c} fmt=f32le\n".encode("ascii"))
        for line in comments:
            fh.write(f"# {line}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(probs, dtype="<f4").tobytes())


def write_dataset_dir(out_dir, features, prototypes, observed_labels,
                      meta_extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_array(out / "features.f32", features, "f32")
    write_array(out / "prototypes.f32", prototypes, "f32")
    write_array(out / "observed_labels.u32", observed_labels, "u32")
    meta = {
        "format": ARRAY_MAGIC,
        "num_samples": int(features.shape[0]),
        "num_classes": int(prototypes.shape[0]),
        "feature_dim": int(features.shape[1]),
        "has_true_labels": False,
    }
    if meta_extra:
        meta.update(meta_extra)
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out
