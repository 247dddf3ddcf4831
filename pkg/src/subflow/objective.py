"""Differentiable exceptionality score.

The core quantity is a Monte-Carlo estimate of the divergence between the
subgroup-conditional and marginal target densities: the membership-weighted
mean of the per-sample log-density ratio. It is scaled by a size factor
mean(s)^gamma and regularized by the average divergence against previously
found subgroups, so successive runs are pushed toward new territory. The
training loss is the negation; gradients are routed to the rule parameters
only, with the density estimates held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flows, rules
from .errors import EmptySubgroupError

# A subgroup whose total soft mass falls at or below this fraction of n is
# reported as empty instead of producing a noise-dominated estimate.
MIN_MASS_FRACTION = 1e-6


@dataclass
class ObjectiveConfig:
    gamma: float = 0.5   # size-correction exponent
    lam: float = 0.5     # diversity regularizer strength

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and non-negative")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be finite and non-negative")


def _check_memberships(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        raise ValueError("empty membership vector")
    if s.min() < 0 or s.max() > 1:
        raise ValueError("memberships must lie in [0, 1]")
    return s


def subgroup_size_frac(s) -> float:
    """Soft subgroup size as a fraction of the sample."""
    return float(_check_memberships(s).mean())


def kl_estimate(s, logp_sg, logp_marg) -> float:
    """Membership-weighted mean log-density ratio, the Monte-Carlo
    divergence estimate of the subgroup against the marginal."""
    s = _check_memberships(s)
    logp_sg = np.asarray(logp_sg, dtype=float)
    logp_marg = np.asarray(logp_marg, dtype=float)
    if not (s.shape == logp_sg.shape == logp_marg.shape):
        raise ValueError("membership and log-density vectors must have equal length")
    mass = s.sum()
    if mass <= MIN_MASS_FRACTION * s.size:
        raise EmptySubgroupError(
            f"subgroup mass {mass:.3e} below floor for n={s.size}")
    return float((s * (logp_sg - logp_marg)).sum() / mass)


def diversity_penalty(s, logp_sg, prior_logps) -> float:
    """Average divergence estimate against each prior subgroup's density;
    zero when there are no priors."""
    if not prior_logps:
        return 0.0
    return float(np.mean([kl_estimate(s, logp_sg, lp) for lp in prior_logps]))


def total_objective(s, logp_sg, logp_marg, prior_logps,
                    cfg: ObjectiveConfig) -> float:
    """Size-corrected divergence plus the weighted diversity term. The
    training loss is the negation of this value."""
    kl = kl_estimate(s, logp_sg, logp_marg)
    size = subgroup_size_frac(s)
    return size ** cfg.gamma * kl + cfg.lam * diversity_penalty(s, logp_sg, prior_logps)


def objective_grads_from_logps(X, rule_params: rules.SoftRuleParams,
                               logp_sg, logp_marg, prior_logps,
                               cfg: ObjectiveConfig):
    """Objective value, memberships, and the loss gradient (of the negated
    objective) w.r.t. (lower, upper, raw_weights), with log-densities given.
    """
    s = rules.soft_rule_batch(X, rule_params)
    s = _check_memberships(s)
    logp_sg = np.asarray(logp_sg, dtype=float)
    logp_marg = np.asarray(logp_marg, dtype=float)
    n = s.size
    mass = s.sum()
    if mass <= MIN_MASS_FRACTION * n:
        raise EmptySubgroupError(f"subgroup mass {mass:.3e} below floor for n={n}")
    size = mass / n

    ratio = logp_sg - logp_marg
    kl = (s * ratio).sum() / mass
    # d objective / d s_i, accumulated term by term
    d_obj_ds = size ** cfg.gamma * (ratio - kl) / mass
    if cfg.gamma != 0.0:
        d_obj_ds = d_obj_ds + cfg.gamma * size ** (cfg.gamma - 1.0) * kl / n

    penalty = 0.0
    if prior_logps:
        for prior in prior_logps:
            prior = np.asarray(prior, dtype=float)
            if prior.shape != s.shape:
                raise ValueError("prior log-density length mismatch")
            r_j = logp_sg - prior
            kl_j = (s * r_j).sum() / mass
            penalty += kl_j
            d_obj_ds = d_obj_ds + (cfg.lam / len(prior_logps)) * (r_j - kl_j) / mass
        penalty /= len(prior_logps)

    value = size ** cfg.gamma * kl + cfg.lam * penalty

    d_lower, d_upper, d_raw = rules.soft_rule_grads(X, rule_params)
    coeff = -d_obj_ds[:, None]  # loss = -objective
    return value, s, (coeff * d_lower).sum(axis=0), (coeff * d_upper).sum(axis=0), \
        (coeff * d_raw).sum(axis=0)


def objective_grads(X, y, rule_params: rules.SoftRuleParams,
                    flow_sg: flows.SplineFlowParams,
                    flow_marg: flows.SplineFlowParams,
                    prior_flows, cfg: ObjectiveConfig):
    """Loss gradient w.r.t. the rule parameters with densities evaluated
    from the given flows, which are treated as constants here (the flows
    take their own alternating update). Returns
    (objective_value, d_lower, d_upper, d_raw_weights)."""
    y = np.asarray(y, dtype=float)
    logp_sg = flows.log_prob(flow_sg, y)
    logp_marg = flows.log_prob(flow_marg, y)
    prior_logps = [flows.log_prob(f, y) for f in prior_flows]
    value, _, d_lower, d_upper, d_raw = objective_grads_from_logps(
        X, rule_params, logp_sg, logp_marg, prior_logps, cfg)
    return value, d_lower, d_upper, d_raw
