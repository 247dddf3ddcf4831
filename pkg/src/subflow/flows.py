"""Learnable one-dimensional density estimation.

The density is a standard normal base pushed through a monotone
rational-quadratic spline with K bins on [-B, B] and identity (linear)
tails, preceded by an affine standardization of the data so the spline
support actually covers the sample. Raw parameters are unconstrained:
widths and heights go through a softmax with a minimum-bin floor, interior
knot derivatives through a softplus with a floor, and the boundary
derivatives are pinned to 1 to match the linear tails.

The transform math is plain arithmetic; torch supplies reverse-mode
gradients of the log-likelihood with respect to the raw parameters, which
pairs with the package's own Adam for fitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .errors import DegenerateDataError
from .optim import AdamState, adam_step

MIN_BIN_FRACTION = 1e-3   # min width/height as a fraction of the 2B box side
MIN_DERIVATIVE = 1e-3
# Raw value whose effective derivative is exactly 1 (the tail slope).
BOUNDARY_RAW = math.log(math.expm1(1.0 - MIN_DERIVATIVE))

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SplineFlowParams:
    """Raw spline parameters plus the affine standardization constants."""
    raw_widths: np.ndarray
    raw_heights: np.ndarray
    raw_derivs: np.ndarray
    tail_bound: float
    loc: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        self.raw_widths = np.asarray(self.raw_widths, dtype=float)
        self.raw_heights = np.asarray(self.raw_heights, dtype=float)
        self.raw_derivs = np.asarray(self.raw_derivs, dtype=float)
        if self.raw_widths.shape != self.raw_heights.shape:
            raise ValueError("raw_widths and raw_heights must have equal length")
        if self.raw_derivs.size != self.raw_widths.size - 1:
            raise ValueError("raw_derivs must have one entry per interior knot")
        if not (np.isfinite(self.tail_bound) and self.tail_bound > 0):
            raise ValueError("tail_bound must be positive and finite")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")

    @property
    def num_bins(self) -> int:
        return self.raw_widths.size

    def raw_vector(self) -> np.ndarray:
        """Learnable parameters only, in the order (widths, heights, derivs)."""
        return np.concatenate([self.raw_widths, self.raw_heights, self.raw_derivs])

    def with_raw_vector(self, vec: np.ndarray) -> "SplineFlowParams":
        k = self.num_bins
        vec = np.asarray(vec, dtype=float)
        return replace(self, raw_widths=vec[:k].copy(),
                       raw_heights=vec[k:2 * k].copy(),
                       raw_derivs=vec[2 * k:].copy())

    def to_vector(self) -> np.ndarray:
        """Serialization order: raw_widths, raw_heights, raw_derivs,
        tail_bound, loc, scale."""
        return np.concatenate(
            [self.raw_vector(), [self.tail_bound, self.loc, self.scale]])

    @classmethod
    def from_vector(cls, vec, num_bins: int) -> "SplineFlowParams":
        vec = np.asarray(vec, dtype=float)
        k = num_bins
        if vec.size != 3 * k + 2:
            raise ValueError(f"expected {3 * k + 2} values for {k} bins, got {vec.size}")
        return cls(vec[:k].copy(), vec[k:2 * k].copy(), vec[2 * k:3 * k - 1].copy(),
                   float(vec[3 * k - 1]), float(vec[3 * k]), float(vec[3 * k + 1]))


def init_identity(num_bins: int, tail_bound: float) -> SplineFlowParams:
    """Raw parameters whose effective transform is the identity."""
    if num_bins < 2:
        raise ValueError("need at least 2 spline bins")
    return SplineFlowParams(
        raw_widths=np.zeros(num_bins),
        raw_heights=np.zeros(num_bins),
        raw_derivs=np.full(num_bins - 1, BOUNDARY_RAW),
        tail_bound=float(tail_bound),
    )


def _as_tensor(arr, requires_grad=False):
    t = torch.as_tensor(np.asarray(arr, dtype=float), dtype=torch.float64)
    if requires_grad:
        t = t.clone().requires_grad_(True)
    return t


def _effective_knots(rw, rh, rd, tail_bound):
    """Knot positions, bin sizes and derivatives from raw tensors."""
    k = rw.numel()
    b = tail_bound

    def knots(raw):
        frac = MIN_BIN_FRACTION + (1.0 - MIN_BIN_FRACTION * k) * torch.softmax(raw, 0)
        interior = 2.0 * b * torch.cumsum(frac, 0)[:-1] - b
        ends = torch.full((1,), b, dtype=raw.dtype)
        return torch.cat([-ends, interior, ends])

    knots_x = knots(rw)
    knots_y = knots(rh)
    boundary = torch.full((1,), BOUNDARY_RAW, dtype=rd.dtype)
    derivs = MIN_DERIVATIVE + torch.nn.functional.softplus(
        torch.cat([boundary, rd, boundary]))
    return knots_x, knots_y, derivs


def _spline_forward_t(u, knots_x, knots_y, derivs):
    """Rational-quadratic segment map and its log|dz/du|, inside [-B, B]."""
    k = knots_x.numel() - 1
    idx = torch.clamp(torch.searchsorted(knots_x.detach(), u, right=True) - 1, 0, k - 1)
    xk = knots_x[idx]
    wk = knots_x[idx + 1] - xk
    yk = knots_y[idx]
    hk = knots_y[idx + 1] - yk
    dk = derivs[idx]
    dk1 = derivs[idx + 1]
    sk = hk / wk

    theta = (u - xk) / wk
    t1m = theta * (1.0 - theta)
    denom = sk + (dk + dk1 - 2.0 * sk) * t1m
    z = yk + hk * (sk * theta ** 2 + dk * t1m) / denom
    deriv_num = sk ** 2 * (dk1 * theta ** 2 + 2.0 * sk * t1m + dk * (1.0 - theta) ** 2)
    lad = torch.log(deriv_num) - 2.0 * torch.log(denom)
    return z, lad


def _spline_inverse_t(z, knots_x, knots_y, derivs):
    """Closed-form inverse of the segment map via the quadratic formula."""
    k = knots_x.numel() - 1
    idx = torch.clamp(torch.searchsorted(knots_y.detach(), z, right=True) - 1, 0, k - 1)
    xk = knots_x[idx]
    wk = knots_x[idx + 1] - xk
    yk = knots_y[idx]
    hk = knots_y[idx + 1] - yk
    dk = derivs[idx]
    dk1 = derivs[idx + 1]
    sk = hk / wk

    rel = z - yk
    combo = dk + dk1 - 2.0 * sk
    qa = hk * (sk - dk) + rel * combo
    qb = hk * dk - rel * combo
    qc = -sk * rel
    disc = torch.clamp(qb ** 2 - 4.0 * qa * qc, min=0.0)
    theta = 2.0 * qc / (-qb - torch.sqrt(disc))
    return xk + theta * wk


def _forward_with_lad(params_t, tail_bound, u):
    """(z, log|dz/du|) for arbitrary u; identity outside the tail bound."""
    rw, rh, rd = params_t
    knots_x, knots_y, derivs = _effective_knots(rw, rh, rd, tail_bound)
    inside = (u >= -tail_bound) & (u <= tail_bound)
    u_safe = torch.clamp(u, -tail_bound, tail_bound)
    z_in, lad_in = _spline_forward_t(u_safe, knots_x, knots_y, derivs)
    z = torch.where(inside, z_in, u)
    lad = torch.where(inside, lad_in, torch.zeros_like(u))
    return z, lad


def _log_prob_t(params_t, tail_bound, loc, scale, y):
    u = (y - loc) / scale
    z, lad = _forward_with_lad(params_t, tail_bound, u)
    return -0.5 * z ** 2 - 0.5 * LOG_2PI + lad - math.log(scale)


def _validate_input(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite target value")
    return y


def flow_forward(params: SplineFlowParams, y):
    """Map data to the base space: (z, log|dz/dy|). Accepts scalars or
    arrays and returns matching shapes."""
    y = _validate_input(y)
    scalar = y.ndim == 0
    with torch.no_grad():
        u = _as_tensor((np.atleast_1d(y) - params.loc) / params.scale)
        pt = (_as_tensor(params.raw_widths), _as_tensor(params.raw_heights),
              _as_tensor(params.raw_derivs))
        z, lad = _forward_with_lad(pt, params.tail_bound, u)
    z = z.numpy()
    lad = lad.numpy() - math.log(params.scale)
    if scalar:
        return float(z[0]), float(lad[0])
    return z, lad


def flow_inverse(params: SplineFlowParams, z):
    """Map base-space values back into data space."""
    z = _validate_input(z)
    scalar = z.ndim == 0
    b = params.tail_bound
    with torch.no_grad():
        zt = _as_tensor(np.atleast_1d(z))
        pt = (_as_tensor(params.raw_widths), _as_tensor(params.raw_heights),
              _as_tensor(params.raw_derivs))
        knots_x, knots_y, derivs = _effective_knots(*pt, b)
        inside = (zt >= -b) & (zt <= b)
        u_in = _spline_inverse_t(torch.clamp(zt, -b, b), knots_x, knots_y, derivs)
        u = torch.where(inside, u_in, zt)
    y = u.numpy() * params.scale + params.loc
    if scalar:
        return float(y[0])
    return y


def log_prob(params: SplineFlowParams, y):
    """Log-density of y under the flow (base log-density plus log-det)."""
    y = _validate_input(y)
    scalar = y.ndim == 0
    with torch.no_grad():
        pt = (_as_tensor(params.raw_widths), _as_tensor(params.raw_heights),
              _as_tensor(params.raw_derivs))
        lp = _log_prob_t(pt, params.tail_bound, params.loc, params.scale,
                         _as_tensor(np.atleast_1d(y)))
    out = lp.numpy()
    if scalar:
        return float(out[0])
    return out


def _grad_tensors(params):
    return (_as_tensor(params.raw_widths, requires_grad=True),
            _as_tensor(params.raw_heights, requires_grad=True),
            _as_tensor(params.raw_derivs, requires_grad=True))


def _collect_grads(tensors):
    return np.concatenate(
        [t.grad.numpy() if t.grad is not None else np.zeros(t.numel())
         for t in tensors])


def log_prob_grads(params: SplineFlowParams, y) -> np.ndarray:
    """Gradient of the mean log-likelihood of the batch w.r.t. the raw
    parameter vector (widths, heights, derivs). Empty batch -> zeros."""
    y = _validate_input(np.atleast_1d(y))
    if y.size == 0:
        return np.zeros(3 * params.num_bins - 1)
    pt = _grad_tensors(params)
    loss = _log_prob_t(pt, params.tail_bound, params.loc, params.scale,
                       _as_tensor(y)).mean()
    loss.backward()
    return _collect_grads(pt)


def mixture_log_likelihood(p_sg: SplineFlowParams, p_comp: SplineFlowParams,
                           y, s) -> float:
    """Mean log of the membership-weighted two-component mixture."""
    y = _validate_input(np.atleast_1d(y))
    s = np.asarray(s, dtype=float)
    _check_memberships(s, y)
    with torch.no_grad():
        value, _, _ = _mixture_value_and_grads(p_sg, p_comp, y, s, want_grads=False)
    return value


def mixture_grads(p_sg: SplineFlowParams, p_comp: SplineFlowParams, y, s):
    """(value, grads_sg, grads_comp) of the mean mixture log-likelihood
    w.r.t. each flow's raw parameter vector."""
    y = _validate_input(np.atleast_1d(y))
    s = np.asarray(s, dtype=float)
    _check_memberships(s, y)
    return _mixture_value_and_grads(p_sg, p_comp, y, s, want_grads=True)


def _check_memberships(s, y):
    if s.shape != y.shape:
        raise ValueError("memberships and targets must have equal length")
    if s.size and (s.min() < 0 or s.max() > 1):
        raise ValueError("memberships must lie in [0, 1]")


def _mixture_value_and_grads(p_sg, p_comp, y, s, want_grads):
    yt = _as_tensor(y)
    st = _as_tensor(s)
    pt_sg = _grad_tensors(p_sg) if want_grads else (
        _as_tensor(p_sg.raw_widths), _as_tensor(p_sg.raw_heights),
        _as_tensor(p_sg.raw_derivs))
    pt_comp = _grad_tensors(p_comp) if want_grads else (
        _as_tensor(p_comp.raw_widths), _as_tensor(p_comp.raw_heights),
        _as_tensor(p_comp.raw_derivs))
    lp_sg = _log_prob_t(pt_sg, p_sg.tail_bound, p_sg.loc, p_sg.scale, yt)
    lp_comp = _log_prob_t(pt_comp, p_comp.tail_bound, p_comp.loc, p_comp.scale, yt)
    # log(p_sg * s + p_comp * (1 - s)) via logsumexp; log(0) = -inf drops
    # the corresponding branch and routes no gradient through it.
    stacked = torch.stack([lp_sg + torch.log(st), lp_comp + torch.log1p(-st)])
    value = torch.logsumexp(stacked, dim=0).mean()
    if not want_grads:
        return float(value), None, None
    value.backward()
    return float(value.detach()), _collect_grads(pt_sg), _collect_grads(pt_comp)


def _standardization(y, robust_scale):
    if robust_scale:
        loc = float(np.median(y))
        q25, q75 = np.percentile(y, [25.0, 75.0])
        scale = float(q75 - q25) / 1.349  # sigma-consistent under normality
    else:
        loc = float(np.mean(y))
        scale = float(np.std(y))
    if not (np.isfinite(scale) and scale > 0):
        scale = 1.0
    if not np.isfinite(loc):
        loc = 0.0
    return loc, scale


def fit_marginal(y, epochs: int = 2000, lr: float = 5e-2, seed: int = 0,
                 num_bins: int = 8, tail_bound: float = 4.0,
                 robust_scale: bool = False) -> SplineFlowParams:
    """Full-batch maximum-likelihood fit from identity initialization.

    The fit is deterministic; the seed is accepted for interface stability
    but full-batch training introduces no randomness.
    """
    y = _validate_input(np.atleast_1d(y))
    if y.size < 2:
        raise DegenerateDataError("need at least 2 samples to fit a density")
    loc, scale = _standardization(y, robust_scale)
    params = replace(init_identity(num_bins, tail_bound), loc=loc, scale=scale)
    state = AdamState.init(3 * num_bins - 1)
    yt = _as_tensor(y)
    for _ in range(epochs):
        pt = _grad_tensors(params)
        loss = -_log_prob_t(pt, params.tail_bound, loc, scale, yt).mean()
        loss.backward()
        vec, state = adam_step(params.raw_vector(), _collect_grads(pt), state, lr)
        params = params.with_raw_vector(vec)
    return params


def fit_weighted_pair(y, s, p_sg: SplineFlowParams, p_comp: SplineFlowParams,
                      lr: float, states=None):
    """One Adam step on both flows maximizing the mixture likelihood.

    ``states`` carries the two Adam states across calls; pass the returned
    value back in to continue the same optimization.
    """
    if states is None:
        states = (AdamState.init(3 * p_sg.num_bins - 1),
                  AdamState.init(3 * p_comp.num_bins - 1))
    _, g_sg, g_comp = mixture_grads(p_sg, p_comp, y, s)
    vec_sg, state_sg = adam_step(p_sg.raw_vector(), -g_sg, states[0], lr)
    vec_comp, state_comp = adam_step(p_comp.raw_vector(), -g_comp, states[1], lr)
    return (p_sg.with_raw_vector(vec_sg), p_comp.with_raw_vector(vec_comp),
            (state_sg, state_comp))
