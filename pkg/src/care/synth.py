"""Synthetic long-tailed datasets with injected label noise.

Class sizes follow the exponential profile n_c = n_1 * IF^(-(c-1)/(C-1)),
the standard construction for long-tailed benchmark subsampling, with IF the
ratio of the largest to the smallest class. Features are unit-normalized
Gaussian clusters around random unit prototypes, so nearest-prototype
classification is a meaningful reference signal. Noise is injected through an
explicit per-class transition matrix whose rows sum to one:

  symmetric-uniform    T[i][i] = 1-eta, T[i][j] = eta / (C-1)
  asymmetric-pairflip  T[i][i] = 1-eta, T[i][(i+1) mod C] = eta
  joint                T[i][i] = 1-eta, T[i][j] = eta * n_j / sum_{k!=i} n_k
                       (flips are attracted to populous classes, so tail-true
                       samples scatter into the head)

All randomness flows from a single 64-bit seed through counter-based Philox
streams with a fixed draw layout, so each sample's draw is a pure function of
(seed, stream, sample index) and regeneration is bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClassCounts, Dataset

NOISE_KINDS = ("symmetric-uniform", "asymmetric-pairflip", "joint")

# Stream tags keep prototype, feature, and label-noise draws independent.
_STREAM_PROTOTYPES = 0
_STREAM_FEATURES = 1
_STREAM_NOISE = 2


def stream_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one named draw stream of a run seed."""
    if seed < 0:
        raise ValueError("seed must be a non-negative 64-bit integer")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream))
    return np.random.Generator(np.random.Philox(ss))


def unit_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize each row; zero rows are rejected."""
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero row")
    return matrix / norms


@dataclass(frozen=True)
class ImbalanceSpec:
    """Exponential class-size profile: n_1 / n_C equals the imbalance factor."""

    imbalance_factor: float
    max_per_class: int
    num_classes: int

    def __post_init__(self):
        if self.imbalance_factor < 1:
            raise ValueError("imbalance factor must be >= 1")
        if self.max_per_class < 1:
            raise ValueError("max_per_class must be >= 1")
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    rate: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}, "
                             f"expected one of {NOISE_KINDS}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("noise rate must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ClusterSpec:
    """Gaussian cluster geometry for the synthetic embedding space."""

    feature_dim: int
    intra_class_spread: float
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if not self.intra_class_spread > 0:
            raise ValueError("intra_class_spread must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def longtail_profile(spec: ImbalanceSpec) -> ClassCounts:
    """Per-class counts n_c = round(n_1 * IF^(-(c-1)/(C-1))), floored at 1."""
    c, n1, imb = spec.num_classes, spec.max_per_class, spec.imbalance_factor
    if c == 1:
        return ClassCounts(np.array([n1], dtype=np.int64))
    exponents = -np.arange(c, dtype=np.float64) / (c - 1)
    counts = np.rint(n1 * imb ** exponents).astype(np.int64)
    counts = np.maximum(counts, 1)
    return ClassCounts(counts)


def synth_features(counts: ClassCounts, spec: ClusterSpec) -> Dataset:
    """Clustered unit features around random unit prototypes.

    Sample i of class y is normalize(t_y + N(0, sigma^2 I)). Observed labels
    start equal to the true labels; noise injection is a separate step.
    """
    c = counts.num_classes
    n = counts.total
    d = spec.feature_dim

    prototypes = unit_rows(
        stream_rng(spec.seed, _STREAM_PROTOTYPES).standard_normal((c, d)))
    labels = np.repeat(np.arange(c, dtype=np.int64), counts.counts)
    noise = stream_rng(spec.seed, _STREAM_FEATURES).standard_normal((n, d))
    features = unit_rows(prototypes[labels] + spec.intra_class_spread * noise)

    return Dataset(
        features=features,
        observed_labels=labels.copy(),
        prototypes=prototypes,
        true_labels=labels,
    )


def transition_matrix(kind: str, rate: float, class_counts: np.ndarray) -> np.ndarray:
    """The (C, C) label-corruption matrix; row i is the law of the observed
    label given true class i. Each diagonal entry is set to one minus the
    exactly-summed off-diagonal mass, so rows sum to 1 exactly under fsum.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    c = counts.shape[0]
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}")
    if c == 1:
        if rate > 0:
            raise ValueError("cannot inject noise with a single class")
        return np.ones((1, 1))

    t = np.zeros((c, c))
    for i in range(c):
        if kind == "symmetric-uniform":
            t[i, :] = rate / (c - 1)
        elif kind == "asymmetric-pairflip":
            t[i, (i + 1) % c] = rate
        else:  # joint: flip mass proportional to the target class frequency
            others = np.delete(np.arange(c), i)
            denom = counts[others].sum()
            if denom == 0:
                raise ValueError("joint noise needs at least one populated "
                                 "class besides each source class")
            t[i, others] = rate * counts[others] / denom
        t[i, i] = 0.0
        t[i, i] = 1.0 - math.fsum(t[i].tolist())
    return t


def inject_noise(d: Dataset, spec: NoiseSpec) -> Dataset:
    """Corrupt observed labels by sampling from the transition matrix row of
    each sample's true class. True labels are preserved unchanged.
    """
    if d.true_labels is None:
        raise ValueError("noise injection requires ground-truth labels")
    c = d.num_classes
    true_counts = np.bincount(d.true_labels, minlength=c)
    t = transition_matrix(spec.kind, spec.rate, true_counts)

    # Inverse-CDF sampling: u[i] depends only on (seed, i).
    u = stream_rng(spec.seed, _STREAM_NOISE).random(d.num_samples)
    cdf = np.cumsum(t, axis=1)
    cdf[:, -1] = 1.0  # guard against cumulative rounding shortfall
    observed = (u[:, None] < cdf[d.true_labels]).argmax(axis=1).astype(np.int64)

    return Dataset(
        features=d.features,
        observed_labels=observed,
        prototypes=d.prototypes,
        true_labels=d.true_labels,
    )


def empirical_noise_rate(d: Dataset) -> float:
    """Fraction of samples whose observed label differs from ground truth."""
    if d.true_labels is None:
        raise ValueError("noise rate requires ground-truth labels")
    mismatches = int(np.count_nonzero(d.observed_labels != d.true_labels))
    return mismatches / d.num_samples
