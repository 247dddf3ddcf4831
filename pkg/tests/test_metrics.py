import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subflow.errors import DegenerateDataError
from subflow.metrics import (Histogram, amd, bhattacharyya, f1, fd_bin_edges,
                             histogram, kl_hist, size_corrected)


def brute_force_bc(p, q):
    total = 0.0
    for a, b in zip(p, q):
        total += math.sqrt(a * b)
    return total


def brute_force_kl(p, q, floor=1e-10):
    total = 0.0
    for a, b in zip(p, q):
        if a > 0:
            total += a * math.log(a / max(b, floor))
    return total


def brute_force_f1(pred, truth):
    tp = sum(1 for a, b in zip(pred, truth) if a and b)
    fp = sum(1 for a, b in zip(pred, truth) if a and not b)
    fn = sum(1 for a, b in zip(pred, truth) if not a and b)
    return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def random_pair(rng, m):
    p = rng.random(m)
    q = rng.random(m)
    # sprinkle exact zeros to exercise the floor paths
    p[rng.random(m) < 0.2] = 0.0
    q[rng.random(m) < 0.2] = 0.0
    p = p / p.sum() if p.sum() else np.full(m, 1.0 / m)
    q = q / q.sum() if q.sum() else np.full(m, 1.0 / m)
    edges = np.linspace(0, 1, m + 1)
    return Histogram(edges, p), Histogram(edges, q)


class TestFdBinEdges:
    def test_integer_ramp_gives_ten_bins(self):
        edges = fd_bin_edges(np.arange(1000, dtype=float))
        assert len(edges) == 11
        assert edges[0] == 0.0 and edges[-1] == 999.0

    def test_affine_equivariance(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(500)
        a, b = 2.5, -7.0
        edges = fd_bin_edges(values)
        scaled = fd_bin_edges(a * values + b)
        assert np.allclose(scaled, a * edges + b, atol=1e-9)

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateDataError):
            fd_bin_edges(np.array([1.0]))
        with pytest.raises(DegenerateDataError):
            fd_bin_edges(np.full(100, 3.5))

    def test_sturges_fallback_on_zero_iqr(self):
        # heavy middle mass makes IQR zero without being constant
        values = np.concatenate([np.zeros(900), np.array([-1.0, 1.0])])
        edges = fd_bin_edges(values)
        assert len(edges) == math.ceil(math.log2(902)) + 1 + 1


class TestHistogram:
    def test_single_bin_mass(self):
        h = histogram(np.full(10, 0.5), np.array([0.0, 1.0]))
        assert h.probs[0] == 1.0

    def test_uniform_data_uniform_probs(self):
        rng = np.random.default_rng(1)
        h = histogram(rng.random(100000), np.linspace(0, 1, 11))
        assert np.all(np.abs(h.probs - 0.1) < 0.01)

    def test_out_of_range_values_clip_to_terminal_bins(self):
        h = histogram(np.array([-5.0, 0.5, 99.0]), np.array([0.0, 1.0, 2.0]))
        assert h.probs[0] == pytest.approx(2 / 3)
        assert h.probs[-1] == pytest.approx(1 / 3)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_probs_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        h = histogram(rng.standard_normal(50), np.linspace(-3, 3, 8))
        assert abs(h.probs.sum() - 1.0) <= 1e-12

    def test_empty_values_rejected(self):
        with pytest.raises(ValueError):
            histogram(np.array([]), np.array([0.0, 1.0]))


class TestBhattacharyya:
    def test_identical_is_one(self):
        edges = np.linspace(0, 1, 5)
        h = Histogram(edges, np.array([0.1, 0.2, 0.3, 0.4]))
        assert bhattacharyya(h, h) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_is_zero(self):
        edges = np.linspace(0, 1, 3)
        p = Histogram(edges, np.array([1.0, 0.0]))
        q = Histogram(edges, np.array([0.0, 1.0]))
        assert bhattacharyya(p, q) == 0.0

    def test_hand_value(self):
        edges = np.linspace(0, 1, 3)
        p = Histogram(edges, np.array([0.25, 0.75]))
        q = Histogram(edges, np.array([0.75, 0.25]))
        assert bhattacharyya(p, q) == pytest.approx(2 * math.sqrt(0.1875), abs=1e-12)

    def test_edge_mismatch_rejected(self):
        p = Histogram(np.array([0.0, 1.0]), np.array([1.0]))
        q = Histogram(np.array([0.0, 2.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            bhattacharyya(p, q)

    def test_symmetry_and_brute_force_agreement(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            p, q = random_pair(rng, int(rng.integers(2, 12)))
            bc = bhattacharyya(p, q)
            assert bc == pytest.approx(bhattacharyya(q, p), abs=1e-15)
            assert bc == pytest.approx(brute_force_bc(p.probs, q.probs), abs=1e-12)

    def test_unity_implies_identical(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            p, q = random_pair(rng, 6)
            if bhattacharyya(p, q) >= 1.0 - 1e-9:
                assert np.allclose(p.probs, q.probs, atol=1e-6)


class TestKlHist:
    def test_identical_is_zero(self):
        edges = np.linspace(0, 1, 4)
        h = Histogram(edges, np.array([0.2, 0.5, 0.3]))
        assert kl_hist(h, h) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value_log_two(self):
        edges = np.linspace(0, 1, 3)
        p = Histogram(edges, np.array([1.0, 0.0]))
        q = Histogram(edges, np.array([0.5, 0.5]))
        assert kl_hist(p, q) == pytest.approx(math.log(2), abs=1e-12)

    def test_non_negative_without_floor(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            m = int(rng.integers(2, 10))
            p = rng.random(m) + 0.05
            q = rng.random(m) + 0.05
            edges = np.linspace(0, 1, m + 1)
            v = kl_hist(Histogram(edges, p / p.sum()), Histogram(edges, q / q.sum()))
            assert v >= -1e-15

    def test_asymmetry_on_concrete_pair(self):
        edges = np.linspace(0, 1, 3)
        p = Histogram(edges, np.array([0.9, 0.1]))
        q = Histogram(edges, np.array([0.5, 0.5]))
        assert kl_hist(p, q) != pytest.approx(kl_hist(q, p), abs=1e-6)

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            p, q = random_pair(rng, int(rng.integers(2, 12)))
            assert kl_hist(p, q) == pytest.approx(
                brute_force_kl(p.probs, q.probs), abs=1e-12)


class TestAmdAndSizeCorrection:
    def test_identical_sets_zero(self):
        v = np.array([1.0, 2.0, 3.0])
        assert amd(v, v) == 0.0

    def test_mean_difference(self):
        assert amd(np.array([2.0, 2.0]), np.array([1.0])) == pytest.approx(1.0)

    def test_translation_invariance(self):
        rng = np.random.default_rng(6)
        sub = rng.random(20)
        full = rng.random(200)
        assert amd(sub + 5.0, full + 5.0) == pytest.approx(amd(sub, full), abs=1e-12)

    def test_size_correction_values(self):
        assert size_corrected(2.0, 0.5, 1.0) == pytest.approx(1.0)
        assert size_corrected(2.0, 0.25, 0.0) == pytest.approx(2.0)
        assert size_corrected(2.0, 1.0, 3.0) == pytest.approx(2.0)


class TestF1:
    def test_perfect_prediction(self):
        truth = np.array([True, False, True])
        assert f1(truth, truth) == 1.0

    def test_all_negative_prediction(self):
        assert f1(np.zeros(4, bool), np.array([True, True, False, False])) == 0.0

    def test_hand_value(self):
        pred = np.array([True, True, True, False])
        truth = np.array([True, True, False, True])
        assert f1(pred, truth) == pytest.approx(2 * 2 / (2 * 2 + 1 + 1))

    def test_no_positives_anywhere(self):
        assert f1(np.zeros(3, bool), np.zeros(3, bool)) == 0.0

    @given(st.integers(0, 2 ** 32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.random(30) < 0.4
        truth = rng.random(30) < 0.3
        perm = rng.permutation(30)
        assert f1(pred, truth) == pytest.approx(f1(pred[perm], truth[perm]))

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(1, 40))
            pred = rng.random(n) < rng.random()
            truth = rng.random(n) < rng.random()
            assert f1(pred, truth) == pytest.approx(
                brute_force_f1(pred, truth), abs=1e-12)
