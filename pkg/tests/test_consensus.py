import numpy as np
import pytest
from hypothesis import given, strategies as st

from care import (ClassCounts, Dataset, FrequencyMatrix, KPolicy, accumulate,
                  class_contribution, compute_k, epoch_consensus,
                  initial_frequency, k_per_class, rectify, reliability_weight,
                  te_confidence_all, topk)


class TestComputeK:
    def test_quarter_hand_values(self):
        p = KPolicy(form="quarter")
        assert compute_k(p, 1, 100) == 1
        assert compute_k(p, 500, 100) == 4
        assert compute_k(p, 10_000, 100) == 10

    def test_quarter_exact_fourth_powers(self):
        p = KPolicy(form="quarter")
        for k in (2, 3, 5, 7, 10, 13):
            assert compute_k(p, k ** 4, 1000) == k
            assert compute_k(p, k ** 4 - 1, 1000) == k - 1

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            compute_k(KPolicy(), 0, 10)

    def test_exp_form_rounds(self):
        p = KPolicy(form="exp")
        assert compute_k(p, 500, 100) == 5      # 500^0.25 = 4.729
        assert compute_k(p, 10_000, 100) == 10

    def test_log_form(self):
        p = KPolicy(form="log")
        assert compute_k(p, 500, 100) == 6      # floor(ln 500) = 6
        assert compute_k(p, 1, 100) == 1        # clamped up

    def test_linear_form_endpoints(self):
        p = KPolicy(form="linear")
        counts = np.array([1000, 700, 520, 400, 250, 170, 100, 55, 30, 20])
        ks = k_per_class(p, counts, 10)
        assert ks[0] == 9 and ks[-1] == 1

    def test_linear_clamped_by_class_count(self):
        ks = k_per_class(KPolicy(form="linear"), np.array([1000, 400, 20]), 3)
        assert ks[0] == 3    # formula says 9, capped at C
        assert ks[-1] == 1

    def test_step_form_by_group(self):
        p = KPolicy(form="step", step_k=(8, 4, 2))
        counts = np.array([950, 900, 800, 500, 200, 90, 60, 40, 10])
        ks = k_per_class(p, counts, 9)
        assert ks.tolist() == [8, 8, 8, 4, 4, 4, 2, 2, 2]

    def test_step_form_ties_share_a_group(self):
        # equal counts must never straddle a group boundary
        p = KPolicy(form="step", step_k=(8, 4, 2))
        ks = k_per_class(p, np.full(9, 100), 9)
        assert ks.tolist() == [8] * 9
        # the tied 500s all promote into the head group; nominal thirds
        # would have cut them at three
        ks = k_per_class(p, np.array([500, 500, 500, 500, 500, 10, 10, 5, 5]), 9)
        assert ks.tolist() == [8, 8, 8, 8, 8, 4, 4, 2, 2]

    def test_global_form(self):
        p = KPolicy(form="global", global_k=6)
        assert compute_k(p, 3, 100) == 6
        assert k_per_class(p, np.array([1, 10, 100]), 3).tolist() == [3, 3, 3]

    def test_clamped_to_class_count(self):
        assert compute_k(KPolicy(form="quarter"), 10_000, 4) == 4

    def test_long_form_aliases(self):
        assert KPolicy(form="power-quarter").form == "quarter"
        assert KPolicy(form="exponential").form == "exp"
        assert KPolicy(form="logarithmic").form == "log"

    def test_unknown_form_rejected(self):
        with pytest.raises(ValueError):
            KPolicy(form="cubic")

    @given(st.lists(st.integers(1, 200_000), min_size=2, max_size=30),
           st.sampled_from(["quarter", "exp", "log", "linear", "step"]))
    def test_non_global_forms_monotone_in_count(self, raw, form):
        counts = np.array(raw, dtype=np.int64)
        ks = k_per_class(KPolicy(form=form), counts, len(raw))
        order = np.argsort(counts, kind="stable")
        assert (np.diff(ks[order]) >= 0).all()

    @given(st.lists(st.integers(1, 4), min_size=3, max_size=15),
           st.sampled_from(["quarter", "exp", "log", "linear", "step"]))
    def test_monotone_under_heavy_ties(self, raw, form):
        counts = np.array(raw, dtype=np.int64)
        ks = k_per_class(KPolicy(form=form), counts, len(raw))
        for a in range(len(raw)):
            for b in range(len(raw)):
                if counts[a] >= counts[b]:
                    assert ks[a] >= ks[b]


class TestTopK:
    def test_full_support(self):
        t = topk(np.array([0.5, 0.3, 0.2]), 3)
        assert t.classes == (0, 1, 2)
        assert t.mass == pytest.approx(1.0)

    def test_top_two(self):
        t = topk(np.array([0.5, 0.3, 0.2]), 2)
        assert t.classes == (0, 1)
        assert t.mass == pytest.approx(0.8)

    def test_uniform_tie_breaks_low_index(self):
        t = topk(np.full(5, 0.2), 1)
        assert t.classes == (0,)

    def test_largest_first_even_when_later(self):
        t = topk(np.array([0.1, 0.2, 0.7]), 2)
        assert t.classes == (2, 1)

    def test_k_out_of_range(self):
        with pytest.raises(ValueError):
            topk(np.array([1.0, 0.0]), 3)
        with pytest.raises(ValueError):
            topk(np.array([1.0, 0.0]), 0)


class TestWeightsAndContributions:
    p = np.array([0.5, 0.3, 0.2])

    def test_reliability_when_observed_in_set(self):
        t = topk(self.p, 2)
        assert reliability_weight(self.p, t, 0) == pytest.approx(0.8)

    def test_reliability_when_observed_outside(self):
        t = topk(self.p, 2)
        assert reliability_weight(self.p, t, 2) == 1.0

    def test_full_mass_at_k_equals_c(self):
        t = topk(self.p, 3)
        assert reliability_weight(self.p, t, 1) == pytest.approx(1.0)

    def test_contribution_gated_by_membership(self):
        t = topk(self.p, 1)
        assert class_contribution(self.p, t, 0) == 0.5
        assert class_contribution(self.p, t, 1) == 0.0
        assert class_contribution(self.p, t, 2) == 0.0

    def test_contribution_identity_at_full_k(self):
        t = topk(self.p, 3)
        for c in range(3):
            assert class_contribution(self.p, t, c) == self.p[c]

    def test_zero_probability_member_contributes_zero(self):
        p = np.array([0.5, 0.5, 0.0])
        t = topk(p, 3)
        assert 2 in t
        assert class_contribution(p, t, 2) == 0.0


class TestAccumulate:
    def test_hand_worked_row(self):
        # anchor one-hot at class 2; both auxiliaries at K=1
        f = FrequencyMatrix(np.array([[0.0, 0.0, 1.0]]))
        p_te = np.array([0.6, 0.3, 0.1])
        p_ie = np.array([0.2, 0.1, 0.7])
        p_be = np.array([0.0, 0.0, 1.0])
        triples = [(p_te, topk(p_te, 1)), (p_ie, topk(p_ie, 1)),
                   (p_be, topk(p_be, 1))]
        row = accumulate(f, 0, triples, observed_label=2)
        assert np.allclose(row, [0.6, 0.0, 2.49], atol=1e-12)

    def test_uniform_experts_full_k(self):
        c = 4
        f = FrequencyMatrix(np.zeros((1, c)))
        u = np.full(c, 1 / c)
        onehot = np.zeros(c)
        onehot[1] = 1.0
        triples = [(u, topk(u, c)), (u, topk(u, c)), (onehot, topk(onehot, c))]
        row = accumulate(f, 0, triples, observed_label=1)
        expected = np.full(c, 2 / c)
        expected[1] += 1.0
        assert np.allclose(row, expected, atol=1e-12)

    def test_never_decreases(self):
        rng = np.random.default_rng(5)
        f = FrequencyMatrix(rng.random((3, 4)))
        before = f.values.copy()
        p = rng.random(4)
        p /= p.sum()
        accumulate(f, 1, [(p, topk(p, 2))], observed_label=0)
        assert (f.values >= before - 1e-15).all()


class TestRectify:
    def test_hand_row(self):
        state = rectify(FrequencyMatrix(np.array([[0.6, 0.0, 2.49]])))
        assert state.labels.tolist() == [2]

    def test_all_zero_row_ties_to_zero(self):
        state = rectify(FrequencyMatrix(np.zeros((1, 4))))
        assert state.labels.tolist() == [0]

    def test_counts_and_prior(self):
        values = np.array([[1.0, 0.0], [2.0, 1.0], [0.0, 3.0]])
        state = rectify(FrequencyMatrix(values))
        assert state.labels.tolist() == [0, 0, 1]
        assert state.counts.counts.tolist() == [2, 1]
        assert np.allclose(state.prior, [2 / 3, 1 / 3])


def onehot_rows(labels, c):
    out = np.zeros((len(labels), c))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class TestEpochConsensus:
    def make(self, seed=0, n=40, c=4):
        rng = np.random.default_rng(seed)
        protos = rng.standard_normal((c, 8))
        protos /= np.linalg.norm(protos, axis=1, keepdims=True)
        feats = rng.standard_normal((n, 8))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        labels = rng.integers(0, c, n)
        return Dataset(features=feats, observed_labels=labels, prototypes=protos,
                       true_labels=labels)

    def test_experts_echoing_anchor_change_nothing(self):
        d = self.make()
        c = d.num_classes
        echo = onehot_rows(d.observed_labels, c)
        f = initial_frequency(d)
        counts = ClassCounts(np.bincount(d.observed_labels, minlength=c))
        for _ in range(3):
            f, state = epoch_consensus(d, f, echo, echo, KPolicy(), counts)
            counts = state.counts
            assert (state.labels == d.observed_labels).all()

    def test_single_pass_weak_experts_keep_observed(self):
        d = self.make(seed=1)
        c = d.num_classes
        rng = np.random.default_rng(2)
        weak = np.full((d.num_samples, c), 1 / c) + rng.normal(0, 1e-4, (d.num_samples, c))
        weak = np.abs(weak)
        weak /= weak.sum(axis=1, keepdims=True)
        f = initial_frequency(d)
        counts = ClassCounts(np.bincount(d.observed_labels, minlength=c))
        _, state = epoch_consensus(d, f, weak, weak, KPolicy(), counts)
        assert (state.labels == d.observed_labels).all()

    def test_monotone_accumulation_across_epochs(self):
        d = self.make(seed=3)
        c = d.num_classes
        te = te_confidence_all(d, 25.0)
        f = initial_frequency(d)
        counts = ClassCounts(np.bincount(d.observed_labels, minlength=c))
        for expected_epoch in range(1, 5):
            prev = f.values.copy()
            f, state = epoch_consensus(d, f, te, None, KPolicy(), counts)
            counts = state.counts
            assert (f.values >= prev - 1e-15).all()
            assert f.epoch == expected_epoch

    def test_anchor_holds_when_both_experts_corroborate(self):
        # both auxiliaries keep the observed label in their top set forever
        d = self.make(seed=4, n=25, c=3)
        c = d.num_classes
        corroborate = onehot_rows(d.observed_labels, c) * 0.6
        corroborate += 0.4 / c
        f = initial_frequency(d)
        counts = ClassCounts(np.bincount(d.observed_labels, minlength=c))
        for _ in range(5):
            f, state = epoch_consensus(d, f, corroborate, corroborate,
                                       KPolicy(form="global", global_k=2), counts)
            counts = state.counts
            assert (state.labels == d.observed_labels).all()

    def test_bitwise_deterministic(self):
        d = self.make(seed=6)
        c = d.num_classes
        te = te_confidence_all(d, 25.0)
        results = []
        for _ in range(2):
            f = initial_frequency(d)
            counts = ClassCounts(np.bincount(d.observed_labels, minlength=c))
            for _ in range(3):
                f, state = epoch_consensus(d, f, te, None, KPolicy(), counts)
                counts = state.counts
            results.append((f.values.copy(), state.labels.copy()))
        assert (results[0][0] == results[1][0]).all()
        assert (results[0][1] == results[1][1]).all()

    def test_count_vector_length_checked(self):
        d = self.make()
        f = initial_frequency(d)
        with pytest.raises(ValueError):
            epoch_consensus(d, f, None, None, KPolicy(), ClassCounts([1, 2]))
