"""Evaluation: noise rates by frequency group, accuracy, macro F1."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClassCounts


@dataclass(frozen=True)
class GroupSplit:
    """Head / medium / tail class partition, contiguous in count order.

    Classes are sorted by count descending (ties by index); head takes the
    first ceil(C/3), medium the next ceil((C-head)/2), tail the rest. With
    fewer than 3 classes everything lands in the head group.
    """

    head: np.ndarray
    med: np.ndarray
    tail: np.ndarray

    @property
    def group_of(self) -> np.ndarray:
        c = len(self.head) + len(self.med) + len(self.tail)
        g = np.empty(c, dtype=np.int64)
        g[self.head], g[self.med], g[self.tail] = 0, 1, 2
        return g


def group_split(counts: ClassCounts | np.ndarray) -> GroupSplit:
    values = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts)
    c = values.shape[0]
    order = np.argsort(-values, kind="stable")   # descending, ties by index
    if c < 3:
        return GroupSplit(order, order[:0], order[:0])
    n_head = math.ceil(c / 3)
    n_med = math.ceil((c - n_head) / 2)
    return GroupSplit(order[:n_head],
                      order[n_head:n_head + n_med],
                      order[n_head + n_med:])


def _rate(wrong: np.ndarray, member: np.ndarray) -> float:
    total = int(member.sum())
    if total == 0:
        return 0.0
    return int((wrong & member).sum()) / total


def noise_rate_by_group(labels, true_labels, split: GroupSplit):
    """Mismatch fraction (overall, head, med, tail), grouped by TRUE class
    so each group rate measures how well that group's labels were recovered.
    """
    labels = np.asarray(labels)
    true_labels = np.asarray(true_labels)
    if labels.shape != true_labels.shape:
        raise ValueError("label arrays must have equal length")
    wrong = labels != true_labels
    group = split.group_of[true_labels]
    overall = int(wrong.sum()) / labels.shape[0]
    return (overall,
            _rate(wrong, group == 0),
            _rate(wrong, group == 1),
            _rate(wrong, group == 2))


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("label arrays must have equal length")
    return int((pred == truth).sum()) / pred.shape[0]


def macro_f1(pred, truth, num_classes: int) -> float:
    """Unweighted mean of per-class F1. A class absent from both pred and
    truth contributes 0 (penalizes vanishing classes).
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if np.any(pred >= num_classes) or np.any(truth >= num_classes):
        raise ValueError("labels must be < num_classes")
    tp = np.bincount(truth[pred == truth], minlength=num_classes).astype(np.float64)
    pred_n = np.bincount(pred, minlength=num_classes).astype(np.float64)
    true_n = np.bincount(truth, minlength=num_classes).astype(np.float64)
    denom = pred_n + true_n                    # 2*TP + FP + FN
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(num_classes), where=denom > 0)
    return float(f1.mean())


@dataclass(frozen=True)
class MetricRecord:
    nr_overall: float | None
    nr_head: float | None
    nr_med: float | None
    nr_tail: float | None
    accuracy: float | None
    macro_f1: float | None
    per_class_nr: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "nr_overall": self.nr_overall,
            "nr_head": self.nr_head,
            "nr_med": self.nr_med,
            "nr_tail": self.nr_tail,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_nr": list(self.per_class_nr) if self.per_class_nr is not None else None,
        }


def per_class_noise_rate(labels, true_labels, num_classes: int) -> np.ndarray:
    """rho_c: mismatch fraction among samples whose TRUE class is c."""
    labels = np.asarray(labels)
    true_labels = np.asarray(true_labels)
    wrong = np.bincount(true_labels[labels != true_labels],
                        minlength=num_classes).astype(np.float64)
    total = np.bincount(true_labels, minlength=num_classes).astype(np.float64)
    return np.divide(wrong, total, out=np.zeros(num_classes), where=total > 0)
