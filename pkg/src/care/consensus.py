"""Class-adaptive Top-K consensus, evidence accumulation, and rectification.

Each epoch, every expert m views a sample through the K most confident
classes of its own prediction. The candidate-set size K is class-adaptive:
it grows with the sample count of the sample's current label, so samples
currently assigned to tail classes face a stricter consensus while head
samples get a permissive one. An expert's contribution for class c is

    g_m(c) = p_m[c]  if c is in the expert's Top-K, else 0,

weighted by its reliability

    alpha_m = sum of p_m over its Top-K   if the observed label is in that
              Top-K (the expert corroborates the annotation),
    alpha_m = 1                           otherwise,

and the sample's running evidence row accumulates alpha_m * g_m(c) across
experts and epochs, without decay. The rectified label is the row argmax
(ties to the lowest class index), and the rectified per-class counts drive
both the next epoch's K values and the training prior.

The observed label enters the same accumulation as a scaled one-hot expert,
which is what anchors samples against over-eager correction: a single
auxiliary expert can never out-vote a full-weight anchor because its
per-epoch contribution to any other class is strictly below 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ClassCounts, Dataset, FrequencyMatrix, RectifiedState
from .experts import be_confidence

K_FORMS = ("quarter", "step", "exp", "log", "linear", "global")

# Long-form aliases accepted wherever a form name is parsed.
_FORM_ALIASES = {
    "power-quarter": "quarter",
    "exponential": "exp",
    "logarithmic": "log",
}


@dataclass(frozen=True)
class KPolicy:
    """How the per-class candidate-set size K is derived from class counts.

    quarter   floor(n^(1/4))                      (the default)
    exp       round(n^0.25)
    log       floor(ln n)
    linear    round((n - n_min)/(n_max - n_min) * (k_max - k_min) + k_min)
    step      fixed K per head/med/tail group
    global    one fixed K for every class

    Emitted values are always clamped to [1, C]; every non-global form is
    non-decreasing in the class count.
    """

    form: str = "quarter"
    global_k: int = 4
    step_k: tuple[int, int, int] = (8, 4, 2)
    linear_k_min: int = 1
    linear_k_max: int = 9

    def __post_init__(self):
        form = _FORM_ALIASES.get(self.form, self.form)
        object.__setattr__(self, "form", form)
        if form not in K_FORMS:
            raise ValueError(f"unknown K form {self.form!r}, expected one of {K_FORMS}")
        if self.global_k < 1:
            raise ValueError("global K must be >= 1")
        if len(self.step_k) != 3 or any(k < 1 for k in self.step_k):
            raise ValueError("step_k must be three positive values")
        if not (self.step_k[0] >= self.step_k[1] >= self.step_k[2]):
            raise ValueError("step_k must be non-increasing head >= med >= tail")
        if not 1 <= self.linear_k_min <= self.linear_k_max:
            raise ValueError("need 1 <= linear_k_min <= linear_k_max")


def _floor_root4(n: int) -> int:
    # Exact integer floor of n^(1/4); float pow alone misrounds at exact
    # fourth powers.
    k = int(float(n) ** 0.25)
    while (k + 1) ** 4 <= n:
        k += 1
    while k > 0 and k ** 4 > n:
        k -= 1
    return k


def compute_k(policy: KPolicy, n_c: int, num_classes: int,
              counts: ClassCounts | np.ndarray | None = None) -> int:
    """Candidate-set size for one class of count n_c, clamped to [1, C].

    The linear and step forms depend on the whole count vector (extremes,
    group membership) and need ``counts``.
    """
    if n_c < 1:
        raise ValueError("class count must be >= 1")
    if policy.form in ("linear", "step"):
        if counts is None:
            raise ValueError(f"{policy.form} form needs the full class counts")
        values = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts)
        ks = k_per_class(policy, values, num_classes)
        matches = np.nonzero(values == n_c)[0]
        if matches.size == 0:
            raise ValueError(f"count {n_c} does not appear in the count vector")
        return int(ks[matches[0]])
    if policy.form == "quarter":
        k = _floor_root4(n_c)
    elif policy.form == "exp":
        k = round(float(n_c) ** 0.25)
    elif policy.form == "log":
        k = math.floor(math.log(n_c))
    else:  # global
        k = policy.global_k
    return max(1, min(k, num_classes))


def k_per_class(policy: KPolicy, counts: ClassCounts | np.ndarray,
                num_classes: int | None = None) -> np.ndarray:
    """Vector of K values, one per class, for the current count vector.

    Zero-count classes (possible after rectification empties a class) clamp
    to K = 1.
    """
    values = counts.counts if isinstance(counts, ClassCounts) else np.asarray(counts)
    c = num_classes if num_classes is not None else values.shape[0]
    if values.shape[0] != c:
        raise ValueError("count vector length must equal num_classes")

    if policy.form == "global":
        ks = np.full(c, policy.global_k, dtype=np.int64)
    elif policy.form == "quarter":
        ks = np.array([_floor_root4(int(n)) for n in values], dtype=np.int64)
    elif policy.form == "exp":
        ks = np.array([round(float(n) ** 0.25) for n in values], dtype=np.int64)
    elif policy.form == "log":
        ks = np.array([math.floor(math.log(n)) if n > 0 else 0 for n in values],
                      dtype=np.int64)
    elif policy.form == "linear":
        n_min, n_max = int(values.min()), int(values.max())
        k_min, k_max = policy.linear_k_min, policy.linear_k_max
        if n_max == n_min:
            ks = np.full(c, k_max, dtype=np.int64)
        else:
            frac = (values.astype(np.float64) - n_min) / (n_max - n_min)
            ks = np.rint(frac * (k_max - k_min) + k_min).astype(np.int64)
    else:  # step: K fixed per frequency group, with count-threshold
        # boundaries so equal counts always share a group (K must be
        # non-decreasing in the count, even across group edges)
        head_k, med_k, tail_k = policy.step_k
        if c < 3:
            ks = np.full(c, head_k, dtype=np.int64)
        else:
            by_count = np.sort(values)[::-1]
            n_head = math.ceil(c / 3)
            n_med = math.ceil((c - n_head) / 2)
            t_head = by_count[n_head - 1]
            t_med = by_count[n_head + n_med - 1]
            ks = np.where(values >= t_head, head_k,
                          np.where(values >= t_med, med_k, tail_k)).astype(np.int64)
    return np.clip(ks, 1, c)


@dataclass(frozen=True)
class TopKSet:
    """The K highest-confidence classes of one expert prediction, in
    descending-confidence order (ties toward the lower class index), plus
    their total probability mass.
    """

    classes: tuple[int, ...]
    mass: float

    def __contains__(self, c: int) -> bool:
        return c in self.classes

    def __len__(self) -> int:
        return len(self.classes)


def topk(p: np.ndarray, k: int) -> TopKSet:
    p = np.asarray(p, dtype=np.float64)
    c = p.shape[0]
    if not 1 <= k <= c:
        raise ValueError(f"K must lie in [1, {c}], got {k}")
    order = np.argsort(-p, kind="stable")[:k]   # stable: ties by ascending index
    return TopKSet(tuple(int(i) for i in order), float(p[order].sum()))


def reliability_weight(p: np.ndarray, t: TopKSet, observed_label: int) -> float:
    """Top-K mass when the expert corroborates the observed label, else 1."""
    if observed_label in t:
        return t.mass
    return 1.0


def class_contribution(p: np.ndarray, t: TopKSet, c: int) -> float:
    """p[c] gated by Top-K membership."""
    p = np.asarray(p, dtype=np.float64)
    return float(p[c]) if c in t else 0.0


def _accumulate_row(row: np.ndarray, experts, observed_label: int) -> None:
    # experts: iterable of (probs, top_index_array); row mutated in place.
    for p, idx in experts:
        sel = p[idx]
        mass = float(sel.sum())
        alpha = mass if bool((idx == observed_label).any()) else 1.0
        row[idx] += alpha * sel


def accumulate(f: FrequencyMatrix, i: int, expert_triples, observed_label: int) -> np.ndarray:
    """Add every expert's reliability-weighted, Top-K-gated confidence into
    sample i's evidence row. ``expert_triples`` is an iterable of
    (probs, TopKSet) pairs; the observed-label one-hot flows through the
    same rule as the others. Returns the updated row.
    """
    row = f.values[i]
    pairs = [(np.asarray(p, dtype=np.float64), np.asarray(t.classes, dtype=np.int64))
             for p, t in expert_triples]
    _accumulate_row(row, pairs, observed_label)
    return row


def rectify(f: FrequencyMatrix) -> RectifiedState:
    """Row-argmax labels (ties to lowest class index), their counts, and the
    induced empirical prior.
    """
    labels = f.values.argmax(axis=1).astype(np.int64)
    counts = np.bincount(labels, minlength=f.num_classes)
    n = f.num_samples
    return RectifiedState(
        labels=labels,
        counts=ClassCounts(counts, epoch=f.epoch),
        prior=counts / n,
    )


def epoch_consensus(
    d: Dataset,
    f: FrequencyMatrix,
    te_probs: np.ndarray | None,
    ie_probs: np.ndarray | None,
    policy: KPolicy,
    prev_counts: ClassCounts,
    be_weight: float = 1.0,
) -> tuple[FrequencyMatrix, RectifiedState]:
    """One full accumulation pass over the dataset, then rectification.

    K for sample i is the policy value at the count of the sample's current
    rectified label (the argmax of its evidence row going in), shared by all
    experts viewing that sample. Either auxiliary expert matrix may be None
    (ablations); the observed-label anchor always participates.
    """
    n, c = f.values.shape
    if prev_counts.num_classes != c:
        raise ValueError("count vector length must equal num_classes")

    values = f.values.copy()
    prev_labels = values.argmax(axis=1)
    ks = k_per_class(policy, prev_counts, c)

    mats = [m for m in (te_probs, ie_probs) if m is not None]
    orders = [np.argsort(-m, axis=1, kind="stable") for m in mats]
    observed = d.observed_labels

    for i in range(n):
        k = int(ks[prev_labels[i]])
        pairs = [(m[i], o[i, :k]) for m, o in zip(mats, orders)]
        be = be_confidence(int(observed[i]), c, be_weight)
        be_idx = np.argsort(-be, kind="stable")[:k]
        pairs.append((be, be_idx))
        _accumulate_row(values[i], pairs, int(observed[i]))

    out = FrequencyMatrix(values, epoch=f.epoch + 1)
    return out, rectify(out)


def initial_frequency(d: Dataset, be_weight: float = 1.0) -> FrequencyMatrix:
    """Epoch-0 evidence: one scaled one-hot row per observed label."""
    values = np.zeros((d.num_samples, d.num_classes))
    values[np.arange(d.num_samples), d.observed_labels] = be_weight
    return FrequencyMatrix(values, epoch=0)
