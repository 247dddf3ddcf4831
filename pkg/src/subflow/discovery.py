"""End-to-end subgroup discovery.

One discovery round fits nothing up front except the marginal target
density; it then alternates, once per epoch, a gradient step on the soft
rule (maximizing the size-corrected, diversity-regularized divergence) with
a maximum-likelihood step on the subgroup/complement density pair, halving
the temperature at the half and three-quarter marks so the rule hardens as
training ends. Iterating rounds with each fitted subgroup density added to
the prior list yields k distribution-diverse subgroups.

Continuous features are min-max scaled to [0, 1] internally; crisp rules
are rendered in original units. Everything is deterministic given the
configuration: initialization is data-driven and training is full-batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import data, flows, objective, rules
from .errors import SubflowError
from .optim import AdamState, adam_step, anneal_temperature


@dataclass
class TrainConfig:
    epochs_marginal: int = 2000
    epochs_subgroup: int = 1500
    lr_flow: float = 5e-2
    lr_rule: float = 2e-2
    gamma: float = 0.5
    lam: float = 0.5
    t0: float = 0.2
    k_subgroups: int = 1
    spline_bins: int = 8
    spline_tail_bound: float = 4.0
    seed: int = 0
    robust_scale: bool = False  # median/IQR standardization for heavy tails
    # Leading epochs of each round that update only the density pair. A
    # freshly initialized subgroup density scores below the fitted marginal
    # everywhere, which makes the divergence estimate negative and rewards
    # collapsing the rule to nothing; rule steps start once the densities
    # are usable.
    epochs_flow_warmup: int = 100

    def __post_init__(self):
        if self.epochs_marginal < 0 or self.epochs_subgroup < 0:
            raise ValueError("epoch counts must be non-negative")
        if not (self.lr_flow > 0 and self.lr_rule > 0 and self.t0 > 0):
            raise ValueError("learning rates and t0 must be positive")
        if self.k_subgroups < 1:
            raise ValueError("k_subgroups must be at least 1")
        if self.epochs_flow_warmup < 0:
            raise ValueError("epochs_flow_warmup must be non-negative")


@dataclass
class SubgroupResult:
    crisp_rule: rules.CrispRule
    rule_text: str
    # Soft parameters live in the internally scaled feature space and pair
    # with `memberships`; the crisp rule is in original feature units.
    soft_params: rules.SoftRuleParams
    memberships: np.ndarray
    subgroup_flow: flows.SplineFlowParams
    kl_score: float
    size_frac: float
    objective_value: float
    objective_history: np.ndarray = field(repr=False, default=None)


@dataclass
class FailedRound:
    round_index: int
    error: str


def fit_marginal_flow(dataset: data.Dataset, cfg: TrainConfig) -> flows.SplineFlowParams:
    """Fit the marginal target density by full-batch maximum likelihood."""
    return flows.fit_marginal(
        dataset.target, epochs=cfg.epochs_marginal, lr=cfg.lr_flow,
        seed=cfg.seed, num_bins=cfg.spline_bins,
        tail_bound=cfg.spline_tail_bound, robust_scale=cfg.robust_scale)


def discover_one(dataset: data.Dataset, marginal_flow: flows.SplineFlowParams,
                 prior_flows, cfg: TrainConfig) -> SubgroupResult:
    """Run one alternating rule/flow optimization round and extract the
    crisp rule at the final (lowest) temperature."""
    scaled, scaler = data.feature_scaler(dataset)
    X = scaled.features
    y = dataset.target
    p = scaled.n_features

    rule = rules.covering_rule(X.min(axis=0), X.max(axis=0), cfg.t0)
    fresh = replace(flows.init_identity(cfg.spline_bins, cfg.spline_tail_bound),
                    loc=marginal_flow.loc, scale=marginal_flow.scale)
    flow_sg = fresh
    flow_comp = replace(fresh)

    logp_marg = flows.log_prob(marginal_flow, y)
    prior_logps = [flows.log_prob(f, y) for f in prior_flows]
    obj_cfg = objective.ObjectiveConfig(gamma=cfg.gamma, lam=cfg.lam)

    rule_state = AdamState.init(3 * p)
    pair_states = None
    t = cfg.t0
    history = np.empty(cfg.epochs_subgroup)

    for epoch in range(cfg.epochs_subgroup):
        logp_sg = flows.log_prob(flow_sg, y)
        value, s, g_lower, g_upper, g_raw = objective.objective_grads_from_logps(
            X, rule, logp_sg, logp_marg, prior_logps, obj_cfg)
        history[epoch] = value

        if epoch >= cfg.epochs_flow_warmup:
            vec, rule_state = adam_step(
                rule.to_vector(), np.concatenate([g_lower, g_upper, g_raw]),
                rule_state, cfg.lr_rule)
            rule = rules.SoftRuleParams.from_vector(vec, t)
            rule = rules.project_bounds(rule, scaled.feature_ranges)
            s = rules.soft_rule_batch(X, rule)

        flow_sg, flow_comp, pair_states = flows.fit_weighted_pair(
            y, s, flow_sg, flow_comp, cfg.lr_flow, pair_states)

        t = anneal_temperature(epoch, cfg.epochs_subgroup, t)
        if t != rule.temperature:
            rule = replace(rule, temperature=t)

    memberships = rules.soft_rule_batch(X, rule)
    logp_sg = flows.log_prob(flow_sg, y)
    kl = objective.kl_estimate(memberships, logp_sg, logp_marg)
    value = objective.total_objective(memberships, logp_sg, logp_marg,
                                      prior_logps, obj_cfg)

    lower_orig, upper_orig = scaler.bounds_to_original(rule.lower, rule.upper)
    rule_orig = rules.SoftRuleParams(lower_orig, upper_orig,
                                     rule.raw_weights.copy(), rule.temperature)
    crisp = rules.extract_crisp_rule(rule_orig, dataset.feature_ranges,
                                     dataset.feature_kinds)
    return SubgroupResult(
        crisp_rule=crisp,
        rule_text=rules.rule_to_text(crisp, dataset.feature_names),
        soft_params=rule,
        memberships=memberships,
        subgroup_flow=flow_sg,
        kl_score=kl,
        size_frac=float(memberships.mean()),
        objective_value=value,
        objective_history=history,
    )


def discover_k(dataset: data.Dataset, cfg: TrainConfig, marginal_flow=None):
    """Discover k subgroups, feeding each round's fitted subgroup density
    into the next round's diversity regularizer. A failed round is recorded
    as a FailedRound and later rounds still run."""
    if marginal_flow is None:
        marginal_flow = fit_marginal_flow(dataset, cfg)
    priors = []
    results = []
    for k in range(cfg.k_subgroups):
        try:
            result = discover_one(dataset, marginal_flow, priors, cfg)
        except SubflowError as exc:
            results.append(FailedRound(k, f"{type(exc).__name__}: {exc}"))
            continue
        results.append(result)
        priors.append(result.subgroup_flow)
    return results
