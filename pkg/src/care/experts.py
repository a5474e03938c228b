"""Per-sample class-confidence sources.

Three experts feed the consensus:

  TE:  fixed prototype similarity, softmax of scaled cosine between a
        sample's feature and each class prototype (never trained),
  IE:  a trainable cosine classifier head over the same features,
  BE:  the observed label itself as a (optionally down-weighted) one-hot.

A fourth source, FILE, replaces TE or IE with a precomputed confidence
matrix loaded from disk, which is how externally produced model outputs
enter the pipeline.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .core import ConfidenceVector, Dataset
from .synth import stream_rng, unit_rows

DEFAULT_SCALE = 25.0

CONF_MAGIC = "CARECONF v1"
CONF_ROW_TOL = 1e-4

_STREAM_HEAD_INIT = 7


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (max subtraction)."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class CosineHead:
    """Linear classifier on the unit sphere: logits are s * cos(w_c, f).

    Stored rows are kept unit-norm by the optimizer after every update, but
    the forward pass normalizes defensively so logits are well defined for
    any finite weights.
    """

    weights: np.ndarray   # (C, D)
    scale: float = DEFAULT_SCALE

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("head weights must be a (C, D) matrix")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("head weights must be finite")

    @classmethod
    def init_random(cls, num_classes: int, feature_dim: int, seed: int,
                    scale: float = DEFAULT_SCALE) -> "CosineHead":
        # Random unit rows, not class means: the head starts out weak on
        # purpose so the consensus bootstrap is actually exercised.
        w = stream_rng(seed, _STREAM_HEAD_INIT).standard_normal(
            (num_classes, feature_dim))
        return cls(weights=unit_rows(w), scale=scale)

    def logits(self, features: np.ndarray) -> np.ndarray:
        u = unit_rows(self.weights)
        return self.scale * np.atleast_2d(features) @ u.T


@dataclass(frozen=True)
class ExpertKind:
    """Which source supplies a confidence matrix; FILE carries its path."""

    tag: str                 # TE | IE | BE | FILE
    path: str | None = None

    def __post_init__(self):
        if self.tag not in ("TE", "IE", "BE", "FILE"):
            raise ValueError(f"unknown expert tag {self.tag!r}")
        if self.tag == "FILE" and not self.path:
            raise ValueError("FILE expert needs a path")


def te_confidence_all(d: Dataset, scale: float = DEFAULT_SCALE) -> np.ndarray:
    """(N, C) prototype-similarity confidences for every sample."""
    return softmax(scale * d.features @ d.prototypes.T)


def te_confidence(d: Dataset, i: int, scale: float = DEFAULT_SCALE) -> ConfidenceVector:
    """Softmax of scaled cosine between sample i and each class prototype."""
    if not 0 <= i < d.num_samples:
        raise IndexError(f"sample index {i} out of range")
    return ConfidenceVector(softmax(scale * d.prototypes @ d.features[i]))


def ie_confidence_all(head: CosineHead, features: np.ndarray) -> np.ndarray:
    """(N, C) classifier-head confidences for a feature matrix."""
    return softmax(head.logits(features))


def ie_confidence(head: CosineHead, d: Dataset, i: int) -> ConfidenceVector:
    if head.weights.shape[1] != d.feature_dim:
        raise ValueError(
            f"head dim {head.weights.shape[1]} != feature dim {d.feature_dim}")
    if not 0 <= i < d.num_samples:
        raise IndexError(f"sample index {i} out of range")
    return ConfidenceVector(softmax(head.logits(d.features[i])[0]))


def be_confidence(observed_label: int, num_classes: int,
                  be_weight: float = 1.0) -> np.ndarray:
    """The observed label as a scaled one-hot vector.

    With be_weight = 1 this is a proper one-hot; smaller weights shrink the
    anchor so that a single auxiliary expert can out-vote the annotation.
    """
    if not 0 <= observed_label < num_classes:
        raise ValueError(f"label {observed_label} outside [0, {num_classes})")
    if not 0.0 < be_weight <= 1.0:
        raise ValueError("be_weight must lie in (0, 1]")
    v = np.zeros(num_classes)
    v[observed_label] = be_weight
    return v


class ConfidenceFileError(ValueError):
    pass


def save_confidence_file(path: str | os.PathLike, probs: np.ndarray,
                         fmt: str = "f32le", comments: tuple[str, ...] = ()) -> None:
    """Write an (N, C) confidence matrix.

    Layout: one text header line ``CARECONF v1 N=<n> C=<c> fmt=<csv|f32le>``,
    optional ``#``-prefixed comment lines, then N rows of C probabilities:
    decimal text for csv, row-major little-endian float32 for f32le.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("confidence matrix must be 2-d")
    if fmt not in ("csv", "f32le"):
        raise ValueError(f"unknown format {fmt!r}")
    n, c = probs.shape
    header = f"{CONF_MAGIC} N={n} C={c} fmt={fmt}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for line in comments:
            fh.write(f"# {line}\n".encode("ascii"))
        if fmt == "csv":
            buf = io.StringIO()
            for row in probs:
                buf.write(",".join(repr(float(x)) for x in row))
                buf.write("\n")
            fh.write(buf.getvalue().encode("ascii"))
        else:
            fh.write(np.ascontiguousarray(probs, dtype="<f4").tobytes())


def _parse_conf_header(line: str) -> tuple[int, int, str]:
    parts = line.strip().split()
    if len(parts) != 5 or " ".join(parts[:2]) != CONF_MAGIC:
        raise ConfidenceFileError(f"malformed header: {line.strip()!r}")
    fields = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
    try:
        return int(fields["N"]), int(fields["C"]), fields["fmt"]
    except (KeyError, ValueError) as exc:
        raise ConfidenceFileError(f"malformed header: {line.strip()!r}") from exc


def load_confidence_file(path: str | os.PathLike, num_samples: int,
                         num_classes: int) -> np.ndarray:
    """Load and validate an (N, C) confidence matrix written by
    :func:`save_confidence_file` (or any producer of the same layout).

    Every row must be a probability vector within ``CONF_ROW_TOL``; errors
    name the offending row.
    """
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace")
        n, c, fmt = _parse_conf_header(header)
        if n != num_samples or c != num_classes:
            raise ConfidenceFileError(
                f"declared shape ({n}, {c}) does not match expected "
                f"({num_samples}, {num_classes})")
        rest = fh.read()
        if fmt == "csv":
            # Provenance comments may precede the rows; data rows never
            # start with '#'.
            rows = [ln for ln in rest.decode("ascii").splitlines()
                    if ln and not ln.startswith("#")]
            if len(rows) != n:
                raise ConfidenceFileError(
                    f"expected {n} rows, found {len(rows)}")
            probs = np.array([[float(x) for x in ln.split(",")] for ln in rows])
            if probs.shape != (n, c):
                raise ConfidenceFileError("row width does not match header C")
        elif fmt == "f32le":
            # The payload is the fixed-size tail; anything between header
            # and payload must be comment lines. Scanning line-by-line
            # would be wrong here, since raw float bytes can look like '#'.
            expected = n * c * 4
            if len(rest) < expected:
                raise ConfidenceFileError(
                    f"payload is {len(rest)} bytes, expected >= {expected}")
            payload = rest[len(rest) - expected:]
            prefix = rest[:len(rest) - expected]
            if prefix and any(ln and not ln.startswith(b"#")
                              for ln in prefix.split(b"\n")):
                raise ConfidenceFileError(
                    "unexpected bytes between header and payload")
            probs = np.frombuffer(payload, dtype="<f4").reshape(n, c).astype(np.float64)
        else:
            raise ConfidenceFileError(f"unknown format {fmt!r}")

    sums = probs.sum(axis=1)
    bad = np.nonzero(
        (np.abs(sums - 1.0) > CONF_ROW_TOL)
        | (probs < -CONF_ROW_TOL).any(axis=1)
        | (probs > 1.0 + CONF_ROW_TOL).any(axis=1))[0]
    if bad.size:
        r = int(bad[0])
        raise ConfidenceFileError(
            f"row {r} is not a probability vector (sum {sums[r]:.6g}); "
            f"{bad.size} bad row(s) total")
    return probs
