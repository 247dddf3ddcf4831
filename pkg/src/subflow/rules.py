"""Differentiable interval rules.

A soft predicate relaxes the membership test lower < x < upper into a
three-way softmax over the logits (x, 2x - lower, 3x - lower - upper) / t,
whose middle component approaches the crisp indicator as the temperature t
goes to zero (0.5 exactly at the bounds). Predicates are combined into a
soft conjunction by a weighted harmonic mean with ReLU-rectified weights,
which lets training prune irrelevant features. Everything here is pure
numpy with closed-form gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateRuleError

# Smallest predicate value fed to the harmonic inversion; the weighted
# harmonic mean is undefined at exact zero.
PREDICATE_FLOOR = 1e-8

# Minimum (upper - lower) gap after projection, relative to feature range.
BOUND_GAP_REL = 1e-6

KIND_INTERVAL = "interval"
KIND_EQUALS_ZERO = "equals_zero"
KIND_EQUALS_ONE = "equals_one"
KIND_ALWAYS_TRUE = "always_true"

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass
class SoftPredicateParams:
    """Learnable bounds of one soft interval predicate, in feature units."""
    lower: float
    upper: float


@dataclass
class SoftRuleParams:
    """Bounds, pre-ReLU weights and shared temperature of a soft conjunction."""
    lower: np.ndarray
    upper: np.ndarray
    raw_weights: np.ndarray
    temperature: float

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.raw_weights = np.asarray(self.raw_weights, dtype=float)
        if not (self.lower.shape == self.upper.shape == self.raw_weights.shape):
            raise ValueError("lower, upper and raw_weights must have equal length")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise ValueError("temperature must be positive and finite")

    @property
    def n_features(self) -> int:
        return self.lower.size

    @property
    def weights(self) -> np.ndarray:
        """Effective conjunction weights, max(raw, 0)."""
        return np.maximum(self.raw_weights, 0.0)

    def to_vector(self) -> np.ndarray:
        """Flat learnable parameters in the order (lower, upper, raw_weights)."""
        return np.concatenate([self.lower, self.upper, self.raw_weights])

    @classmethod
    def from_vector(cls, vec: np.ndarray, temperature: float) -> "SoftRuleParams":
        lower, upper, raw = np.split(np.asarray(vec, dtype=float), 3)
        return cls(lower.copy(), upper.copy(), raw.copy(), temperature)


@dataclass
class Clause:
    feature_index: int
    kind: str
    lo: float | None = None
    hi: float | None = None


@dataclass
class CrispRule:
    """Conjunction of interval / equality clauses; empty conjunction is true."""
    clauses: list


def covering_rule(feature_mins: np.ndarray, feature_maxs: np.ndarray,
                  temperature: float) -> SoftRuleParams:
    """Initial rule covering the whole data range with unit weights."""
    mins = np.asarray(feature_mins, dtype=float)
    maxs = np.asarray(feature_maxs, dtype=float)
    return SoftRuleParams(mins.copy(), maxs.copy(), np.ones_like(mins), temperature)


def _check_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite value in {name}")


def _predicate_softmax(x, lower, upper, t):
    """The three softmax components of the predicate logits; broadcasts.

    Returns (z_below, z_inside, z_above); z_inside is the predicate value.
    """
    u1 = x / t
    u2 = (2.0 * x - lower) / t
    u3 = (3.0 * x - lower - upper) / t
    m = np.maximum(u1, np.maximum(u2, u3))
    e1 = np.exp(u1 - m)
    e2 = np.exp(u2 - m)
    e3 = np.exp(u3 - m)
    total = e1 + e2 + e3
    return e1 / total, e2 / total, e3 / total


def soft_predicate(x: float, params: SoftPredicateParams, t: float) -> float:
    """Soft membership of x in (lower, upper), sharpened as t -> 0."""
    _check_finite("soft_predicate inputs", x, params.lower, params.upper, t)
    if not t > 0:
        raise ValueError("temperature must be positive")
    _, z2, _ = _predicate_softmax(float(x), params.lower, params.upper, t)
    return float(z2)


def soft_predicate_grads(x: float, params: SoftPredicateParams,
                         t: float) -> tuple[float, float]:
    """Exact partials of soft_predicate w.r.t. (lower, upper).

    Only the second and third logits depend on the bounds; the softmax
    Jacobian collapses to -z1*z2/t and +z2*z3/t.
    """
    _check_finite("soft_predicate inputs", x, params.lower, params.upper, t)
    if not t > 0:
        raise ValueError("temperature must be positive")
    z1, z2, z3 = _predicate_softmax(float(x), params.lower, params.upper, t)
    return float(-z1 * z2 / t), float(z2 * z3 / t)


def soft_binning(x: float, thresholds, t: float) -> np.ndarray:
    """Soft assignment of x to the M+1 bins cut by M sorted thresholds.

    Logits are (j*x + b_j)/t with b_j the negative prefix sums of the
    thresholds; the result is a probability vector over bins.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    _check_finite("soft_binning inputs", x, thresholds, t)
    if not t > 0:
        raise ValueError("temperature must be positive")
    if thresholds.ndim != 1 or thresholds.size < 1:
        raise ValueError("thresholds must be a 1-D sequence")
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    w = np.arange(1, thresholds.size + 2, dtype=float)
    b = np.concatenate([[0.0], -np.cumsum(thresholds)])
    logits = (w * float(x) + b) / t
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def _conjunction(pi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted harmonic mean over the last axis, with predicate floor."""
    total = weights.sum()
    if not total > 0:
        raise DegenerateRuleError("all predicate weights are zero")
    pi_floored = np.maximum(pi, PREDICATE_FLOOR)
    denom = (weights / pi_floored).sum(axis=-1)
    return total / denom


def soft_rule(x, params: SoftRuleParams) -> float:
    """Soft conjunction value for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D feature vector")
    return float(soft_rule_batch(x[None, :], params)[0])


def soft_rule_batch(X, params: SoftRuleParams) -> np.ndarray:
    """Soft conjunction values for every row of X."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise ValueError(
            f"expected an (n, {params.n_features}) matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    _check_finite("soft_rule inputs", X, params.lower, params.upper)
    _, pi, _ = _predicate_softmax(X, params.lower[None, :], params.upper[None, :],
                                  params.temperature)
    return _conjunction(pi, params.weights)


def soft_rule_grads(X, params: SoftRuleParams):
    """Per-sample gradients of the membership w.r.t. every learnable.

    Returns (d_lower, d_upper, d_raw_weights), each of shape (n, p).
    Pruned predicates (raw weight <= 0) get zero gradients everywhere;
    floored predicates get zero bound gradients.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise ValueError(
            f"expected an (n, {params.n_features}) matrix, got shape {X.shape}")
    t = params.temperature
    a = params.weights
    total = a.sum()
    if not total > 0:
        raise DegenerateRuleError("all predicate weights are zero")
    if X.shape[0] == 0:
        empty = np.zeros((0, params.n_features))
        return empty, empty.copy(), empty.copy()

    z1, pi, z3 = _predicate_softmax(X, params.lower[None, :], params.upper[None, :], t)
    pi_floored = np.maximum(pi, PREDICATE_FLOOR)
    denom = (a / pi_floored).sum(axis=-1)[:, None]

    ds_dpi = total * a / (pi_floored ** 2 * denom ** 2)
    active = pi > PREDICATE_FLOOR
    d_lower = ds_dpi * (-z1 * pi / t) * active
    d_upper = ds_dpi * (z3 * pi / t) * active
    ds_da = (denom - total / pi_floored) / denom ** 2
    d_raw = ds_da * (params.raw_weights > 0)
    return d_lower, d_upper, d_raw


def project_bounds(params: SoftRuleParams, feature_ranges) -> SoftRuleParams:
    """Re-separate crossed bounds so upper >= lower + gap, splitting at the
    midpoint; gap is BOUND_GAP_REL of the observed feature range."""
    ranges = np.asarray(feature_ranges, dtype=float)
    gap = BOUND_GAP_REL * (ranges[:, 1] - ranges[:, 0])
    lower = params.lower.copy()
    upper = params.upper.copy()
    crossed = upper < lower + gap
    if np.any(crossed):
        mid = 0.5 * (lower[crossed] + upper[crossed])
        lower[crossed] = mid - 0.5 * gap[crossed]
        upper[crossed] = mid + 0.5 * gap[crossed]
    return replace(params, lower=lower, upper=upper)


def extract_crisp_rule(params: SoftRuleParams, feature_ranges,
                       feature_kinds) -> CrispRule:
    """Crisp rule implied by the soft parameters over the observed data.

    A predicate becomes always_true when its weight is pruned or its
    interval covers the observed range. Binary features render as equality
    tests; continuous ones as intervals clipped to the observed range.
    """
    ranges = np.asarray(feature_ranges, dtype=float)
    clauses = []
    for i in range(params.n_features):
        lo = float(params.lower[i])
        hi = float(params.upper[i])
        fmin, fmax = float(ranges[i, 0]), float(ranges[i, 1])
        if params.raw_weights[i] <= 0 or (lo <= fmin and hi >= fmax):
            clauses.append(Clause(i, KIND_ALWAYS_TRUE))
            continue
        if feature_kinds[i] == BINARY:
            has_zero = lo < 0.0 < hi
            has_one = lo < 1.0 < hi
            if has_zero and not has_one:
                clauses.append(Clause(i, KIND_EQUALS_ZERO))
                continue
            if has_one and not has_zero:
                clauses.append(Clause(i, KIND_EQUALS_ONE))
                continue
            # contains both -> covered above; contains neither -> fall through
        clo = max(lo, fmin)
        chi = min(hi, fmax)
        if not clo < chi:
            # interval misses the observed range entirely; keep it unclipped
            clo, chi = lo, hi
        clauses.append(Clause(i, KIND_INTERVAL, clo, chi))
    return CrispRule(clauses)


def crisp_eval(rule: CrispRule, x) -> bool:
    """True iff every clause holds (intervals strictly, equalities exactly)."""
    x = np.asarray(x, dtype=float)
    for clause in rule.clauses:
        if not 0 <= clause.feature_index < x.size:
            raise IndexError(f"clause feature index {clause.feature_index} out of range")
        v = x[clause.feature_index]
        if clause.kind == KIND_ALWAYS_TRUE:
            continue
        if clause.kind == KIND_INTERVAL:
            if not clause.lo < v < clause.hi:
                return False
        elif clause.kind == KIND_EQUALS_ZERO:
            if v != 0.0:
                return False
        elif clause.kind == KIND_EQUALS_ONE:
            if v != 1.0:
                return False
        else:
            raise ValueError(f"unknown clause kind {clause.kind!r}")
    return True


def crisp_eval_batch(rule: CrispRule, X) -> np.ndarray:
    """Vectorized crisp_eval over the rows of X."""
    X = np.asarray(X, dtype=float)
    mask = np.ones(X.shape[0], dtype=bool)
    for clause in rule.clauses:
        if not 0 <= clause.feature_index < X.shape[1]:
            raise IndexError(f"clause feature index {clause.feature_index} out of range")
        col = X[:, clause.feature_index]
        if clause.kind == KIND_ALWAYS_TRUE:
            continue
        if clause.kind == KIND_INTERVAL:
            mask &= (col > clause.lo) & (col < clause.hi)
        elif clause.kind == KIND_EQUALS_ZERO:
            mask &= col == 0.0
        elif clause.kind == KIND_EQUALS_ONE:
            mask &= col == 1.0
        else:
            raise ValueError(f"unknown clause kind {clause.kind!r}")
    return mask


def rule_to_text(rule: CrispRule, feature_names) -> str:
    """Canonical rendering: clauses joined by " & ", bounds to 6 significant
    digits, always_true clauses omitted, the empty conjunction as "TRUE"."""
    parts = []
    for clause in rule.clauses:
        name = feature_names[clause.feature_index]
        if clause.kind == KIND_ALWAYS_TRUE:
            continue
        if clause.kind == KIND_INTERVAL:
            parts.append(f"{clause.lo:.6g} < {name} < {clause.hi:.6g}")
        elif clause.kind == KIND_EQUALS_ZERO:
            parts.append(f"{name}=0")
        elif clause.kind == KIND_EQUALS_ONE:
            parts.append(f"{name}=1")
        else:
            raise ValueError(f"unknown clause kind {clause.kind!r}")
    return " & ".join(parts) if parts else "TRUE"
