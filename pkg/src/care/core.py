"""Shared domain types: datasets, confidence vectors, and evidence state.

Everything downstream (noise synthesis, experts, consensus, training) works
on these containers. They are deliberately thin wrappers over numpy arrays;
value-level invariants are either enforced at construction (simplex vectors,
non-negative evidence) or enumerable through :func:`validate_dataset` so that
loaders can report *every* problem in a file instead of dying on the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Unit-norm rows and probability sums are checked against these tolerances.
NORM_TOL = 1e-6
SIMPLEX_TOL = 1e-6


def _f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _i64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64)


@dataclass
class Dataset:
    """A pool of unit-norm feature rows plus per-class unit-norm prototypes.

    ``observed_labels`` are the (possibly corrupted) annotations the pipeline
    trains against; ``true_labels`` are optional ground truth, present for
    synthetic data and absent for real data, in which case noise-rate metrics
    are disabled downstream. One feature matrix serves both the prototype
    expert and the trained classifier.
    """

    features: np.ndarray            # (N, D) float64, rows unit norm
    observed_labels: np.ndarray     # (N,) int64 in [0, C)
    prototypes: np.ndarray          # (C, D) float64, rows unit norm
    true_labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(_f64(self.features))
        self.observed_labels = _i64(self.observed_labels)
        self.prototypes = np.atleast_2d(_f64(self.prototypes))
        if self.true_labels is not None:
            self.true_labels = _i64(self.true_labels)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Violation:
    """One dataset invariant failure, addressable by sample or class index."""

    code: str        # label-out-of-range | non-normalized-row | length-mismatch
    message: str
    index: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(v.message for v in self.violations)


def _check_rows_unit(matrix, what, out):
    norms = np.linalg.norm(matrix, axis=1)
    for idx in np.nonzero(np.abs(norms - 1.0) > NORM_TOL)[0]:
        out.append(Violation(
            "non-normalized-row",
            f"{what} row {idx} has L2 norm {norms[idx]:.6g}, expected 1",
            int(idx),
        ))


def validate_dataset(d: Dataset) -> ValidationReport:
    """Check every dataset invariant and enumerate all violations found."""
    out: list[Violation] = []
    n, c = d.num_samples, d.num_classes

    if d.observed_labels.shape[0] != n:
        out.append(Violation(
            "length-mismatch",
            f"observed_labels has length {d.observed_labels.shape[0]}, expected {n}"))
    if d.true_labels is not None and d.true_labels.shape[0] != n:
        out.append(Violation(
            "length-mismatch",
            f"true_labels has length {d.true_labels.shape[0]}, expected {n}"))
    if d.prototypes.shape[1] != d.features.shape[1]:
        out.append(Violation(
            "length-mismatch",
            f"prototypes have dim {d.prototypes.shape[1]}, features have dim "
            f"{d.features.shape[1]}"))

    for name, labels in (("observed", d.observed_labels), ("true", d.true_labels)):
        if labels is None:
            continue
        bad = np.nonzero((labels < 0) | (labels >= c))[0]
        for idx in bad:
            out.append(Violation(
                "label-out-of-range",
                f"{name} label at sample {idx} is {labels[idx]}, "
                f"outside [0, {c})",
                int(idx),
            ))

    _check_rows_unit(d.features, "feature", out)
    _check_rows_unit(d.prototypes, "prototype", out)
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class ConfidenceVector:
    """A per-sample probability distribution over the C classes.

    Construction rejects anything off the simplex: entries must lie in
    [0, 1] and sum to 1 within ``SIMPLEX_TOL``.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = _f64(self.probs)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1:
            raise ValueError(f"confidence vector must be 1-d, got shape {p.shape}")
        if np.any(p < -SIMPLEX_TOL) or np.any(p > 1.0 + SIMPLEX_TOL):
            raise ValueError("confidence entries outside [0, 1]")
        total = float(p.sum())
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"confidence entries sum to {total!r}, expected 1")

    def __len__(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class ClassCounts:
    """Per-class sample counts at a given epoch (observed or rectified)."""

    counts: np.ndarray   # (C,) int64, all >= 0
    epoch: int = 0

    def __post_init__(self):
        c = _i64(self.counts)
        object.__setattr__(self, "counts", c)
        if np.any(c < 0):
            raise ValueError("class counts must be non-negative")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class FrequencyMatrix:
    """Running per-sample, per-class evidence totals.

    Accumulation only ever adds non-negative expert contributions, so entries
    are non-decreasing across epochs; each sample owns its row exclusively
    during a pass (single writer per row).
    """

    values: np.ndarray   # (N, C) float64, all >= 0
    epoch: int = 0

    def __post_init__(self):
        v = _f64(self.values)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ValueError(f"evidence matrix must be 2-d, got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("evidence entries must be non-negative")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RectifiedState:
    """Rectified labels with the class counts and prior they induce.

    ``prior`` is the raw empirical distribution counts / N (smoothing for the
    loss happens in the trainer). ``labels[i]`` is always the row argmax of
    the evidence matrix that produced this state, with ties broken toward the
    lowest class index.
    """

    labels: np.ndarray    # (N,) int64
    counts: ClassCounts
    prior: np.ndarray     # (C,) float64, sums to 1

    def __post_init__(self):
        object.__setattr__(self, "labels", _i64(self.labels))
        object.__setattr__(self, "prior", _f64(self.prior))
        n = self.labels.shape[0]
        if n == 0:
            raise ValueError("rectified state needs at least one sample")
        expected = self.counts.counts / n
        if not np.allclose(self.prior, expected, rtol=0, atol=1e-12):
            raise ValueError("prior must equal counts / num_samples")
        if abs(float(self.prior.sum()) - 1.0) > 1e-9:
            raise ValueError("prior must sum to 1")

    @property
    def num_samples(self) -> int:
        return self.labels.shape[0]
