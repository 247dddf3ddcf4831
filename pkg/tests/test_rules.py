import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subflow import rules
from subflow.errors import DegenerateRuleError
from subflow.optim import finite_diff_check
from subflow.rules import (CrispRule, Clause, SoftPredicateParams,
                           SoftRuleParams, covering_rule, crisp_eval,
                           crisp_eval_batch, extract_crisp_rule,
                           project_bounds, rule_to_text, soft_binning,
                           soft_predicate, soft_predicate_grads, soft_rule,
                           soft_rule_batch, soft_rule_grads)

E_OVER_2_PLUS_E = math.e / (2.0 + math.e)  # predicate at the interval center, t=1


class TestSoftPredicate:
    def test_limit_value_at_lower_bound_is_half(self):
        for lower, upper in [(-1.0, 1.0), (0.2, 0.3), (-5.0, -2.0)]:
            p = SoftPredicateParams(lower, upper)
            assert soft_predicate(lower, p, 1e-6) == pytest.approx(0.5, abs=1e-3)
            assert soft_predicate(upper, p, 1e-6) == pytest.approx(0.5, abs=1e-3)

    def test_limit_value_inside_is_one(self):
        p = SoftPredicateParams(-1.0, 1.0)
        assert soft_predicate(0.0, p, 1e-6) == pytest.approx(1.0, abs=1e-3)

    def test_center_value_at_unit_temperature(self):
        # logits (0, 1, 0) -> middle softmax component e / (2 + e)
        p = SoftPredicateParams(-1.0, 1.0)
        assert soft_predicate(0.0, p, 1.0) == pytest.approx(E_OVER_2_PLUS_E, abs=1e-12)

    def test_sharp_limit_property(self):
        # inside at >= 0.999, outside at <= 0.001, ten-t margins
        rng = np.random.default_rng(3)
        t = 1e-4
        for _ in range(1000):
            lower = rng.uniform(-2, 1)
            upper = lower + rng.uniform(0.05, 2.0)
            p = SoftPredicateParams(lower, upper)
            inside = rng.uniform(lower + 10 * t, upper - 10 * t)
            assert soft_predicate(inside, p, t) >= 0.999
            below = lower - 10 * t - rng.uniform(0, 1)
            above = upper + 10 * t + rng.uniform(0, 1)
            assert soft_predicate(below, p, t) <= 0.001
            assert soft_predicate(above, p, t) <= 0.001

    def test_rejects_bad_inputs(self):
        p = SoftPredicateParams(0.0, 1.0)
        with pytest.raises(ValueError):
            soft_predicate(np.nan, p, 0.5)
        with pytest.raises(ValueError):
            soft_predicate(0.5, SoftPredicateParams(np.inf, 1.0), 0.5)
        with pytest.raises(ValueError):
            soft_predicate(0.5, p, 0.0)

    @given(st.floats(-50, 50), st.floats(-10, 10), st.floats(0.01, 5),
           st.floats(0.01, 10))
    def test_bounded_in_unit_interval(self, x, lower, width, t):
        v = soft_predicate(x, SoftPredicateParams(lower, lower + width), t)
        assert 0.0 <= v <= 1.0


class TestSoftPredicateGrads:
    def test_saturated_interior_has_vanishing_grads(self):
        p = SoftPredicateParams(-1.0, 1.0)
        d_lo, d_hi = soft_predicate_grads(0.0, p, 1e-3)
        assert abs(d_lo) <= 1e-6 and abs(d_hi) <= 1e-6

    def test_matches_finite_differences(self):
        x, t = 0.0, 1.0

        def loss(v):
            return soft_predicate(x, SoftPredicateParams(v[0], v[1]), t)

        def grad(v):
            return np.array(soft_predicate_grads(x, SoftPredicateParams(*v), t))

        err = finite_diff_check(loss, grad, np.array([-1.0, 1.0]))
        assert err <= 1e-5

    def test_symmetric_point_has_equal_magnitudes(self):
        p = SoftPredicateParams(-0.7, 1.3)
        mid = 0.5 * (p.lower + p.upper)
        d_lo, d_hi = soft_predicate_grads(mid, p, 0.45)
        assert abs(d_lo) == pytest.approx(abs(d_hi), rel=1e-12)


class TestSoftBinning:
    def test_one_hot_in_sharp_limit(self):
        out = soft_binning(0.5, (0.0, 1.0), 1e-6)
        assert np.allclose(out, [0.0, 1.0, 0.0], atol=1e-6)

    def test_unit_temperature_frozen_values(self):
        # logits (0.5, 1.0, 0.5) -> softmax
        out = soft_binning(0.5, (0.0, 1.0), 1.0)
        assert np.allclose(out, [0.27406862, 0.45186276, 0.27406862], atol=1e-4)

    @given(st.floats(-20, 20), st.floats(0.01, 5))
    def test_sums_to_one(self, x, t):
        out = soft_binning(x, (-1.0, 0.0, 2.5), t)
        assert abs(out.sum() - 1.0) <= 1e-12

    def test_rejects_unsorted_thresholds(self):
        with pytest.raises(ValueError):
            soft_binning(0.5, (1.0, 0.0), 1.0)
        with pytest.raises(ValueError):
            soft_binning(0.5, (0.0, 0.0), 1.0)

    def test_one_hot_matches_brute_force_bin_lookup(self):
        rng = np.random.default_rng(11)
        t = 1e-4
        for _ in range(1000):
            m = int(rng.integers(1, 8))
            thresholds = np.sort(rng.uniform(-3, 3, m))
            while np.any(np.diff(thresholds) < 20 * t):
                thresholds = np.sort(rng.uniform(-3, 3, m))
            x = rng.uniform(-4, 4)
            while np.min(np.abs(x - thresholds)) < 10 * t:
                x = rng.uniform(-4, 4)
            out = soft_binning(x, thresholds, t)
            expected = int(np.sum(x > thresholds))
            assert out.argmax() == expected
            assert out[expected] >= 0.999

    def test_predicate_is_three_bin_special_case(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            lower = rng.uniform(-2, 0)
            upper = lower + rng.uniform(0.1, 2)
            x = rng.uniform(-3, 3)
            t = rng.uniform(0.05, 2)
            a = soft_predicate(x, SoftPredicateParams(lower, upper), t)
            b = soft_binning(x, (lower, upper), t)[1]
            assert a == pytest.approx(b, abs=1e-12)


class TestSoftRule:
    def test_all_ones_gives_one(self):
        params = SoftRuleParams(np.array([-10.0, -10.0]), np.array([10.0, 10.0]),
                                np.array([1.0, 3.0]), 1e-4)
        assert soft_rule(np.array([0.0, 0.0]), params) == pytest.approx(1.0, abs=1e-6)

    def test_weighted_harmonic_mean_hand_value(self):
        # predicates evaluate to (1, 0.5, 1) by putting x at the second
        # feature's lower bound in the sharp limit; weights (2, 1, 0)
        params = SoftRuleParams(np.array([-1.0, 0.3, -1.0]),
                                np.array([1.0, 0.8, 1.0]),
                                np.array([2.0, 1.0, 0.0]), 1e-7)
        x = np.array([0.0, 0.3, 0.0])
        assert soft_rule(x, params) == pytest.approx(0.75, abs=1e-4)

    def test_floored_predicate_drives_rule_to_zero(self):
        params = SoftRuleParams(np.array([0.0, 0.0]), np.array([1.0, 1.0]),
                                np.array([1.0, 1.0]), 1e-4)
        x = np.array([0.5, 50.0])  # second predicate fully violated
        assert soft_rule(x, params) <= 10 * rules.PREDICATE_FLOOR / 1.0 * 2

    def test_degenerate_weights_raise(self):
        params = SoftRuleParams(np.zeros(2), np.ones(2), np.array([-1.0, 0.0]), 0.5)
        with pytest.raises(DegenerateRuleError):
            soft_rule(np.array([0.5, 0.5]), params)

    def test_strictly_binary_behavior(self):
        # with predicates in {~0, 1} the conjunction is an AND
        params = SoftRuleParams(np.array([0.0, 0.0, 0.0]),
                                np.array([1.0, 1.0, 1.0]),
                                np.array([0.7, 2.0, 1.1]), 1e-5)
        assert soft_rule(np.array([0.5, 0.5, 0.5]), params) >= 0.999
        assert soft_rule(np.array([0.5, 0.5, 9.0]), params) <= 1e-3

    @given(st.floats(0.01, 100))
    def test_weight_scaling_invariance(self, c):
        params = SoftRuleParams(np.array([0.0, 0.2]), np.array([0.6, 0.9]),
                                np.array([1.0, 0.4]), 0.3)
        scaled = SoftRuleParams(params.lower, params.upper,
                                params.raw_weights * c, 0.3)
        x = np.array([0.3, 0.5])
        assert soft_rule(x, params) == pytest.approx(soft_rule(x, scaled), rel=1e-9)

    def test_batch_edge_cases(self):
        params = SoftRuleParams(np.array([0.0]), np.array([1.0]),
                                np.array([1.0]), 0.5)
        assert soft_rule_batch(np.zeros((0, 1)), params).shape == (0,)
        single = soft_rule_batch(np.array([[0.4]]), params)
        assert single[0] == pytest.approx(soft_rule(np.array([0.4]), params))

    def test_batch_respects_row_permutation(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(50, 3))
        params = SoftRuleParams(np.full(3, 0.2), np.full(3, 0.8),
                                np.ones(3), 0.4)
        perm = rng.permutation(50)
        out = soft_rule_batch(X, params)
        assert np.array_equal(out[perm], soft_rule_batch(X[perm], params))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_rule_bounded_in_unit_interval(self, seed):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 6))
        params = SoftRuleParams(rng.uniform(-1, 0.5, p),
                                rng.uniform(0.5, 2.0, p),
                                rng.uniform(0.1, 2.0, p),
                                float(rng.uniform(0.01, 2.0)))
        vals = soft_rule_batch(rng.uniform(-2, 3, (20, p)), params)
        assert np.all(vals >= 0.0) and np.all(vals <= 1.0)


class TestSoftRuleGrads:
    def test_negative_weight_blocks_all_gradients(self):
        params = SoftRuleParams(np.array([0.0, 0.1]), np.array([1.0, 0.9]),
                                np.array([1.0, -0.3]), 0.4)
        d_lo, d_hi, d_w = soft_rule_grads(np.array([[0.4, 0.5]]), params)
        assert d_lo[0, 1] == 0.0 and d_hi[0, 1] == 0.0 and d_w[0, 1] == 0.0

    def test_saturated_predicates_zero_weight_gradients(self):
        params = SoftRuleParams(np.full(2, -50.0), np.full(2, 50.0),
                                np.ones(2), 1e-3)
        _, _, d_w = soft_rule_grads(np.array([[0.0, 0.0]]), params)
        assert np.allclose(d_w, 0.0, atol=1e-9)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p = int(rng.integers(2, 5))
            lower = rng.uniform(0.0, 0.3, p)
            upper = lower + rng.uniform(0.3, 0.7, p)
            raw = rng.uniform(0.2, 1.5, p)
            t = float(rng.uniform(0.25, 0.8))
            X = rng.uniform(-0.1, 1.1, (7, p))
            coeff = rng.standard_normal(7)

            def loss(vec):
                return float(coeff @ soft_rule_batch(
                    X, SoftRuleParams.from_vector(vec, t)))

            def grad(vec):
                d_lo, d_hi, d_w = soft_rule_grads(
                    X, SoftRuleParams.from_vector(vec, t))
                return np.concatenate([coeff @ d_lo, coeff @ d_hi, coeff @ d_w])

            vec0 = np.concatenate([lower, upper, raw])
            assert finite_diff_check(loss, grad, vec0) <= 1e-5


class TestProjection:
    def test_crossed_bounds_get_separated(self):
        params = SoftRuleParams(np.array([0.8, 0.1]), np.array([0.2, 0.9]),
                                np.ones(2), 0.3)
        ranges = np.array([[0.0, 1.0], [0.0, 1.0]])
        fixed = project_bounds(params, ranges)
        gap = rules.BOUND_GAP_REL * 1.0
        assert fixed.upper[0] - fixed.lower[0] == pytest.approx(gap, rel=1e-6)
        assert fixed.lower[0] + fixed.upper[0] == pytest.approx(1.0)  # midpoint kept
        assert fixed.lower[1] == 0.1 and fixed.upper[1] == 0.9  # untouched


class TestCrispExtraction:
    RANGES = np.array([[0.0, 1.0], [0.0, 1.0]])

    def test_covering_interval_is_always_true(self):
        params = SoftRuleParams(np.array([-0.2, 0.2]), np.array([1.2, 0.8]),
                                np.ones(2), 0.1)
        rule = extract_crisp_rule(params, self.RANGES, ["continuous", "continuous"])
        assert rule.clauses[0].kind == rules.KIND_ALWAYS_TRUE
        assert rule.clauses[1].kind == rules.KIND_INTERVAL

    def test_pruned_weight_is_always_true(self):
        params = SoftRuleParams(np.array([0.4]), np.array([0.6]),
                                np.array([0.0]), 0.1)
        rule = extract_crisp_rule(params, np.array([[0.0, 1.0]]), ["continuous"])
        assert rule.clauses[0].kind == rules.KIND_ALWAYS_TRUE

    def test_binary_renderings(self):
        kinds = ["binary"]
        ranges = np.array([[0.0, 1.0]])
        zero = extract_crisp_rule(
            SoftRuleParams(np.array([-0.3]), np.array([0.4]), np.ones(1), 0.1),
            ranges, kinds)
        assert zero.clauses[0].kind == rules.KIND_EQUALS_ZERO
        one = extract_crisp_rule(
            SoftRuleParams(np.array([0.6]), np.array([1.4]), np.ones(1), 0.1),
            ranges, kinds)
        assert one.clauses[0].kind == rules.KIND_EQUALS_ONE

    def test_interval_clipped_to_observed_range(self):
        params = SoftRuleParams(np.array([-0.5]), np.array([0.8]),
                                np.ones(1), 0.1)
        rule = extract_crisp_rule(params, np.array([[0.1, 1.0]]), ["continuous"])
        clause = rule.clauses[0]
        assert clause.kind == rules.KIND_INTERVAL
        assert clause.lo == pytest.approx(0.1) and clause.hi == pytest.approx(0.8)

    def test_crisp_matches_rounded_soft_away_from_bounds(self):
        rng = np.random.default_rng(5)
        t = 1e-4
        for _ in range(50):
            p = int(rng.integers(1, 4))
            lower = rng.uniform(0.1, 0.4, p)
            upper = lower + rng.uniform(0.2, 0.5, p)
            params = SoftRuleParams(lower, upper, rng.uniform(0.5, 2.0, p), t)
            X = rng.uniform(0.0, 1.0, (200, p))
            # keep only points well away from every bound
            dist = np.minimum(np.abs(X - lower), np.abs(X - upper)).min(axis=1)
            X = X[dist >= 3 * t]
            ranges = np.column_stack([X.min(axis=0), X.max(axis=0)])
            crisp = extract_crisp_rule(params, ranges, ["continuous"] * p)
            soft = soft_rule_batch(X, params) >= 0.5
            hard = crisp_eval_batch(crisp, X)
            assert np.array_equal(soft, hard)


class TestCrispEval:
    def test_empty_rule_is_true(self):
        assert crisp_eval(CrispRule([]), np.array([1.0, 2.0]))

    def test_failing_interval(self):
        rule = CrispRule([Clause(0, rules.KIND_INTERVAL, 0.0, 1.0)])
        assert not crisp_eval(rule, np.array([1.5]))
        assert not crisp_eval(rule, np.array([1.0]))  # strict bound
        assert crisp_eval(rule, np.array([0.5]))

    def test_equality_clauses(self):
        rule = CrispRule([Clause(0, rules.KIND_EQUALS_ZERO),
                          Clause(1, rules.KIND_EQUALS_ONE)])
        assert crisp_eval(rule, np.array([0.0, 1.0]))
        assert not crisp_eval(rule, np.array([0.0, 0.0]))

    def test_out_of_range_feature_index(self):
        rule = CrispRule([Clause(3, rules.KIND_INTERVAL, 0.0, 1.0)])
        with pytest.raises(IndexError):
            crisp_eval(rule, np.array([0.5]))

    def test_batch_agrees_with_scalar(self):
        rule = CrispRule([Clause(0, rules.KIND_INTERVAL, 0.2, 0.9),
                          Clause(1, rules.KIND_EQUALS_ONE)])
        X = np.array([[0.5, 1.0], [0.5, 0.0], [0.1, 1.0]])
        batch = crisp_eval_batch(rule, X)
        assert list(batch) == [crisp_eval(rule, row) for row in X]


class TestRuleText:
    def test_empty_and_always_true_render_true(self):
        assert rule_to_text(CrispRule([]), []) == "TRUE"
        rule = CrispRule([Clause(0, rules.KIND_ALWAYS_TRUE)])
        assert rule_to_text(rule, ["a"]) == "TRUE"

    def test_canonical_format(self):
        rule = CrispRule([
            Clause(0, rules.KIND_INTERVAL, 0.2, 0.8),
            Clause(1, rules.KIND_ALWAYS_TRUE),
            Clause(2, rules.KIND_EQUALS_ZERO),
            Clause(3, rules.KIND_EQUALS_ONE),
        ])
        names = ["age", "skip", "smoker", "member"]
        assert rule_to_text(rule, names) == "0.2 < age < 0.8 & smoker=0 & member=1"

    def test_six_significant_digits(self):
        rule = CrispRule([Clause(0, rules.KIND_INTERVAL, 0.123456789, 1479.00004)])
        assert rule_to_text(rule, ["x"]) == "0.123457 < x < 1479"


def test_covering_rule_matches_data_hull():
    mins = np.array([0.0, -2.0])
    maxs = np.array([1.0, 3.0])
    params = covering_rule(mins, maxs, 0.2)
    assert np.array_equal(params.lower, mins)
    assert np.array_equal(params.upper, maxs)
    assert np.array_equal(params.raw_weights, np.ones(2))


def test_vector_round_trip():
    params = SoftRuleParams(np.array([0.1, 0.2]), np.array([0.7, 0.9]),
                            np.array([1.0, -0.5]), 0.3)
    back = SoftRuleParams.from_vector(params.to_vector(), 0.3)
    assert np.array_equal(back.lower, params.lower)
    assert np.array_equal(back.upper, params.upper)
    assert np.array_equal(back.raw_weights, params.raw_weights)
