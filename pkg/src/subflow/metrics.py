"""Histogram-based evaluation metrics for discovered subgroups."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError

KL_FLOOR = 1e-10  # floor for empty reference bins in the KL sum


@dataclass
class Histogram:
    edges: np.ndarray
    probs: np.ndarray


def fd_bin_edges(values) -> np.ndarray:
    """Equal-width bin edges with the Freedman-Diaconis width
    2*IQR*n^(-1/3); falls back to Sturges when the IQR degenerates."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DegenerateDataError("need at least 2 values to bin")
    lo, hi = float(values.min()), float(values.max())
    if not hi > lo:
        raise DegenerateDataError("cannot bin constant data")
    q25, q75 = np.percentile(values, [25.0, 75.0])
    iqr = float(q75 - q25)
    if iqr > 0:
        width = 2.0 * iqr * values.size ** (-1.0 / 3.0)
        n_bins = int(math.ceil((hi - lo) / width))
    else:
        n_bins = int(math.ceil(math.log2(values.size))) + 1
    return np.linspace(lo, hi, n_bins + 1)


def histogram(values, edges) -> Histogram:
    """Normalized counts over the given edges; out-of-range values are
    clipped into the terminal bins, the last bin is right-closed."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot build a histogram from no values")
    edges = np.asarray(edges, dtype=float)
    counts, _ = np.histogram(np.clip(values, edges[0], edges[-1]), bins=edges)
    return Histogram(edges, counts / values.size)


def _check_edges(p: Histogram, q: Histogram):
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ValueError("histograms must share identical edges")


def bhattacharyya(p: Histogram, q: Histogram) -> float:
    """Sum of sqrt(p*q) over shared bins: 1 for identical distributions,
    0 for disjoint supports."""
    _check_edges(p, q)
    return float(np.sqrt(p.probs * q.probs).sum())


def kl_hist(p: Histogram, q: Histogram) -> float:
    """Discrete KL divergence sum over bins with p > 0, with the reference
    probability floored at KL_FLOOR."""
    _check_edges(p, q)
    mask = p.probs > 0
    pp = p.probs[mask]
    qq = np.maximum(q.probs[mask], KL_FLOOR)
    return float((pp * np.log(pp / qq)).sum())


def amd(sub_values, all_values) -> float:
    """Absolute difference between the subgroup and population means."""
    sub_values = np.asarray(sub_values, dtype=float)
    all_values = np.asarray(all_values, dtype=float)
    if sub_values.size == 0 or all_values.size == 0:
        raise ValueError("cannot take the mean of no values")
    return float(abs(sub_values.mean() - all_values.mean()))


def size_corrected(value: float, n_s_frac: float, gamma: float) -> float:
    """Scale a metric by the subgroup size fraction raised to gamma."""
    return float(n_s_frac ** gamma * value)


def f1(pred, truth) -> float:
    """F1 score of predicted against true membership; 0 when there are no
    positives on either side."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth must have equal length")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2.0 * tp / denom
