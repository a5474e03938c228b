"""Prior-adjusted training loop around the consensus pass.

Epoch 0 trains the cosine head on the observed labels (the initial rectified
state); every later epoch first runs the consensus pass to re-rectify labels
and recount classes, then takes one pass of minibatch SGD with momentum on
the rectified labels. The loss adds the log of the rectified class prior to
each logit inside the softmax cross-entropy ("la"), which cancels to plain
cross-entropy under a uniform prior ("ce"). The prior is re-derived from the
current rectified counts every epoch with add-one smoothing, since a class
can lose all of its rectified members and log 0 is undefined.

Determinism: batch order is a seeded permutation per epoch, reductions run
in fixed index order, and all randomness is counter-based, so identical
(seed, config, dataset) triples produce bitwise-identical run reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .consensus import KPolicy, epoch_consensus, initial_frequency, rectify
from .core import ClassCounts, Dataset, RectifiedState
from .experts import (CosineHead, DEFAULT_SCALE, ie_confidence_all,
                      te_confidence_all)
from .metrics import accuracy, group_split, noise_rate_by_group
from .synth import stream_rng, unit_rows

_STREAM_BATCH = 11
_STREAM_HEAD = 13


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    loss: str = "la"            # la | ce
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.loss not in ("la", "ce"):
            raise ValueError("loss must be 'la' or 'ce'")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class OptimizerState:
    velocity: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, head: CosineHead) -> "OptimizerState":
        return cls(velocity=np.zeros_like(head.weights))


def smoothed_prior(counts: np.ndarray | ClassCounts) -> np.ndarray:
    """Add-one smoothed class prior (n_c + 1) / (N + C); strictly positive."""
    values = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts)
    return (values + 1.0) / (values.sum() + values.shape[0])


def la_loss(z: np.ndarray, y: int, prior: np.ndarray) -> float:
    """Prior-adjusted cross-entropy of one logit vector:
    -log softmax(z + log prior)[y], computed with max subtraction.
    """
    z = np.asarray(z, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    if np.any(prior <= 0):
        raise ValueError("prior must be strictly positive (smooth the counts)")
    if not 0 <= y < z.shape[0]:
        raise ValueError(f"label {y} outside [0, {z.shape[0]})")
    adjusted = z + np.log(prior)
    shifted = adjusted - adjusted.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[y])


def _batch_loss_grad(head: CosineHead, features: np.ndarray, labels: np.ndarray,
                     prior: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean prior-adjusted loss over a batch and its exact gradient w.r.t.
    the raw head weights, through the row normalization inside the forward.
    """
    w = head.weights
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    u = w / norms
    z = head.scale * features @ u.T
    adjusted = z + np.log(prior)[None, :]
    shifted = adjusted - adjusted.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    b = features.shape[0]
    rows = np.arange(b)
    loss = float(-np.log(p[rows, labels]).mean())

    delta = p.copy()
    delta[rows, labels] -= 1.0
    delta /= b
    g_u = head.scale * delta.T @ features        # gradient w.r.t. unit rows
    # Project out the radial component: d(u)/d(w) = (I - u u^T) / |w|.
    g_w = (g_u - (g_u * u).sum(axis=1, keepdims=True) * u) / norms
    return loss, g_w


def la_grad(head: CosineHead, features: np.ndarray, labels: np.ndarray,
            prior: np.ndarray) -> np.ndarray:
    """Exact analytic gradient of the mean prior-adjusted loss over a batch
    with respect to the head weights (normalization included).
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    prior = np.asarray(prior, dtype=np.float64)
    if np.any(prior <= 0):
        raise ValueError("prior must be strictly positive (smooth the counts)")
    _, grad = _batch_loss_grad(head, features, labels, prior)
    return grad


def sgd_step(head: CosineHead, grad: np.ndarray, opt: OptimizerState,
             cfg: TrainConfig) -> tuple[CosineHead, OptimizerState]:
    """Momentum SGD with classic (gradient-added) weight decay, then
    re-normalize the rows back onto the unit sphere.
    """
    if grad.shape != head.weights.shape:
        raise ValueError("gradient shape must match head weights")
    if not np.all(np.isfinite(grad)):
        raise ValueError("non-finite gradient")
    velocity = cfg.momentum * opt.velocity + grad + cfg.weight_decay * head.weights
    weights = unit_rows(head.weights - cfg.learning_rate * velocity)
    return (CosineHead(weights=weights, scale=head.scale),
            OptimizerState(velocity=velocity, step=opt.step + 1))


@dataclass(frozen=True)
class EpochRecord:
    """End-of-epoch snapshot: rectified-label quality, the epoch's mean
    training loss, and the classifier's accuracy on ground truth (None when
    the dataset has no ground truth).
    """

    epoch: int
    nr_overall: float | None
    nr_head: float | None
    nr_med: float | None
    nr_tail: float | None
    train_loss: float
    acc_eval: float | None
    class_counts: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "nr_overall": self.nr_overall,
            "nr_head": self.nr_head,
            "nr_med": self.nr_med,
            "nr_tail": self.nr_tail,
            "train_loss": self.train_loss,
            "acc_eval": self.acc_eval,
            "class_counts": list(self.class_counts),
        }


@dataclass
class RunReport:
    records: list[EpochRecord]
    final_head: CosineHead
    final_state: RectifiedState

    @property
    def final_noise_rate(self) -> float | None:
        return self.records[-1].nr_overall

    @property
    def initial_noise_rate(self) -> float | None:
        return self.records[0].nr_overall


def run_care(
    d: Dataset,
    cfg: TrainConfig,
    policy: KPolicy = KPolicy(),
    scale: float = DEFAULT_SCALE,
    be_weight: float = 1.0,
    use_te: bool = True,
    use_ie: bool = True,
    te_probs: np.ndarray | None = None,
    ie_probs: np.ndarray | None = None,
) -> RunReport:
    """The full rectify-and-train loop.

    Initial state: rectified labels equal the observed labels, the evidence
    matrix holds one scaled one-hot row per observed label, and class counts
    come from the observed labels. Epoch 0 trains on that initial state;
    epochs 1..E-1 each run the consensus pass (with the head as it stood at
    the end of the previous epoch) and then train on the freshly rectified
    labels. One record is emitted per epoch, so record 0 carries the input
    noise rate and the last record describes the persisted final labels.

    ``te_probs`` / ``ie_probs`` swap in fixed confidence matrices for the
    corresponding computed expert; ``use_te`` / ``use_ie`` drop an auxiliary
    expert entirely (ablations).
    """
    n, c = d.num_samples, d.num_classes
    if te_probs is not None:
        use_te = True
    if ie_probs is not None:
        use_ie = True

    f = initial_frequency(d, be_weight)
    state = rectify(f)
    counts = ClassCounts(np.bincount(d.observed_labels, minlength=c), epoch=0)

    head = CosineHead.init_random(c, d.feature_dim, seed=cfg.seed, scale=scale)
    opt = OptimizerState.zeros_like(head)

    has_truth = d.true_labels is not None
    split = group_split(np.bincount(d.true_labels, minlength=c)) if has_truth \
        else None
    te_mat = te_probs if te_probs is not None else (
        te_confidence_all(d, scale) if use_te else None)

    records: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        if epoch > 0:
            ie_mat = ie_probs if ie_probs is not None else (
                ie_confidence_all(head, d.features) if use_ie else None)
            f, state = epoch_consensus(d, f, te_mat, ie_mat, policy, counts,
                                       be_weight)
            counts = state.counts

        prior = smoothed_prior(counts) if cfg.loss == "la" else np.full(c, 1.0 / c)
        labels = state.labels

        order = stream_rng(cfg.seed, _STREAM_BATCH, epoch).permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = _batch_loss_grad(head, d.features[idx], labels[idx], prior)
            head, opt = sgd_step(head, grad, opt, cfg)
            total += loss * idx.shape[0]
            seen += idx.shape[0]
        epoch_loss = total / seen

        if has_truth:
            nr = noise_rate_by_group(labels, d.true_labels, split)
            preds = head.logits(d.features).argmax(axis=1)
            acc = accuracy(preds, d.true_labels)
        else:
            nr, acc = (None, None, None, None), None
        records.append(EpochRecord(
            epoch=epoch,
            nr_overall=nr[0], nr_head=nr[1], nr_med=nr[2], nr_tail=nr[3],
            train_loss=epoch_loss,
            acc_eval=acc,
            class_counts=tuple(int(x) for x in counts.counts),
        ))

    return RunReport(records=records, final_head=head, final_state=state)
