"""Subgroup discovery through differentiable rules and spline-flow
density estimates."""

from .data import Dataset, SynthConfig, load_csv, sample_target, synth_generate
from .discovery import (FailedRound, SubgroupResult, TrainConfig, discover_k,
                        discover_one, fit_marginal_flow)
from .errors import (DegenerateDataError, DegenerateRuleError,
                     EmptySubgroupError, NonFiniteGradientError, SubflowError)
from .flows import SplineFlowParams, fit_marginal, init_identity, log_prob
from .objective import ObjectiveConfig, kl_estimate, total_objective
from .rules import (CrispRule, SoftRuleParams, crisp_eval, extract_crisp_rule,
                    rule_to_text, soft_predicate, soft_rule)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SynthConfig", "load_csv", "sample_target", "synth_generate",
    "FailedRound", "SubgroupResult", "TrainConfig", "discover_k",
    "discover_one", "fit_marginal_flow",
    "DegenerateDataError", "DegenerateRuleError", "EmptySubgroupError",
    "NonFiniteGradientError", "SubflowError",
    "SplineFlowParams", "fit_marginal", "init_identity", "log_prob",
    "ObjectiveConfig", "kl_estimate", "total_objective",
    "CrispRule", "SoftRuleParams", "crisp_eval", "extract_crisp_rule",
    "rule_to_text", "soft_predicate", "soft_rule",
    "__version__",
]
