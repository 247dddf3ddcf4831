"""Finite-difference verification suites for every analytic gradient.

Random instances are drawn in well-conditioned regions (temperatures away
from zero, weights away from the ReLU kink, bounds separated) so the
central-difference oracle itself is accurate; the suites then report the
worst relative disagreement per gradient family.
"""

from __future__ import annotations

import numpy as np

from . import flows, objective, rules
from .optim import finite_diff_check

TOLERANCE = 1e-4


def check_soft_predicate(seed: int = 0, instances: int = 100) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        lower = rng.uniform(-1.0, 0.4)
        upper = lower + rng.uniform(0.2, 1.5)
        x = rng.uniform(lower - 0.5, upper + 0.5)
        t = rng.uniform(0.15, 1.0)

        def loss(vec):
            return rules.soft_predicate(x, rules.SoftPredicateParams(*vec), t)

        def grad(vec):
            return np.array(rules.soft_predicate_grads(
                x, rules.SoftPredicateParams(*vec), t))

        worst = max(worst, finite_diff_check(loss, grad, np.array([lower, upper])))
    return worst


def _random_rule_instance(rng):
    p = int(rng.integers(3, 9))
    lower = rng.uniform(0.0, 0.4, p)
    upper = lower + rng.uniform(0.2, 0.6, p)
    raw = rng.uniform(0.15, 1.5, p)
    # Negate some weights, staying clear of the kink at zero. Keep at least
    # two active: with a single active weight the conjunction is exactly
    # scale-invariant in it, and a zero analytic gradient turns the relative
    # finite-difference error into pure rounding noise.
    raw[rng.random(p) < 0.3] *= -1.0
    raw[:2] = np.abs(raw[:2])
    t = rng.uniform(0.2, 0.8)
    X = rng.uniform(-0.2, 1.2, (16, p))
    coeff = rng.standard_normal(16)
    return X, coeff, raw, lower, upper, t


def check_soft_rule(seed: int = 1, instances: int = 100) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        X, coeff, raw, lower, upper, t = _random_rule_instance(rng)

        def loss(vec):
            params = rules.SoftRuleParams.from_vector(vec, t)
            return float(coeff @ rules.soft_rule_batch(X, params))

        def grad(vec):
            params = rules.SoftRuleParams.from_vector(vec, t)
            d_lower, d_upper, d_raw = rules.soft_rule_grads(X, params)
            return np.concatenate([coeff @ d_lower, coeff @ d_upper, coeff @ d_raw])

        vec0 = np.concatenate([lower, upper, raw])
        worst = max(worst, finite_diff_check(loss, grad, vec0))
    return worst


def _random_flow(rng, num_bins=6, tail_bound=3.0, loc=0.0, scale=1.0):
    params = flows.init_identity(num_bins, tail_bound)
    vec = params.raw_vector() + 0.4 * rng.standard_normal(3 * num_bins - 1)
    params = params.with_raw_vector(vec)
    params.loc = loc
    params.scale = scale
    return params


def check_flow_log_prob(seed: int = 2, instances: int = 100) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        template = _random_flow(rng, loc=rng.uniform(-0.3, 0.3),
                                scale=rng.uniform(0.7, 1.4))
        b = template.tail_bound
        y = rng.uniform(-b - 1.0, b + 1.0, 16) * template.scale + template.loc

        def loss(vec):
            return float(np.mean(flows.log_prob(template.with_raw_vector(vec), y)))

        def grad(vec):
            return flows.log_prob_grads(template.with_raw_vector(vec), y)

        worst = max(worst, finite_diff_check(loss, grad, template.raw_vector()))
    return worst


def check_mixture(seed: int = 3, instances: int = 100) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p_sg = _random_flow(rng)
        p_comp = _random_flow(rng)
        y = rng.uniform(-3.5, 3.5, 16)
        s = rng.uniform(0.05, 0.95, 16)
        size = p_sg.raw_vector().size

        def loss(vec):
            return flows.mixture_log_likelihood(
                p_sg.with_raw_vector(vec[:size]),
                p_comp.with_raw_vector(vec[size:]), y, s)

        def grad(vec):
            _, g_sg, g_comp = flows.mixture_grads(
                p_sg.with_raw_vector(vec[:size]),
                p_comp.with_raw_vector(vec[size:]), y, s)
            return np.concatenate([g_sg, g_comp])

        vec0 = np.concatenate([p_sg.raw_vector(), p_comp.raw_vector()])
        worst = max(worst, finite_diff_check(loss, grad, vec0))
    return worst


def check_objective(seed: int = 4, instances: int = 100) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p = 4
        n = 48
        X = rng.uniform(0.0, 1.0, (n, p))
        lower = rng.uniform(0.0, 0.3, p)
        upper = lower + rng.uniform(0.25, 0.6, p)
        raw = rng.uniform(0.3, 1.3, p)
        t = 0.5
        logp_sg = rng.standard_normal(n)
        logp_marg = rng.standard_normal(n)
        priors = [rng.standard_normal(n)]
        cfg = objective.ObjectiveConfig(gamma=0.5, lam=0.5)

        def loss(vec):
            params = rules.SoftRuleParams.from_vector(vec, t)
            s = rules.soft_rule_batch(X, params)
            return -objective.total_objective(s, logp_sg, logp_marg, priors, cfg)

        def grad(vec):
            params = rules.SoftRuleParams.from_vector(vec, t)
            _, _, gl, gu, gw = objective.objective_grads_from_logps(
                X, params, logp_sg, logp_marg, priors, cfg)
            return np.concatenate([gl, gu, gw])

        vec0 = np.concatenate([lower, upper, raw])
        worst = max(worst, finite_diff_check(loss, grad, vec0))
    return worst


def run_all(seed: int = 0, instances: int = 100) -> dict:
    """Worst relative finite-difference error per gradient family."""
    return {
        "soft_predicate": check_soft_predicate(seed, instances),
        "soft_rule": check_soft_rule(seed + 1, instances),
        "flow_log_prob": check_flow_log_prob(seed + 2, instances),
        "mixture_likelihood": check_mixture(seed + 3, instances),
        "total_objective": check_objective(seed + 4, instances),
    }
