"""Uncertainty indicators over class-probability vectors.

The primary score relabels an unlabeled sample's state with

    1 - (min_var(C, max(V)) / variance(V)) * max(V)

where min_var is the smallest variance attainable by a probability vector
sharing V's maximum (one entry at the max, the rest equal).  A uniform V
makes the ratio 0/0; by continuity it is defined as 1, giving 1 - 1/C.
The score lives in [0, 1): 0 for one-hot (fully confident), approaching 1
for spread-out, multi-modal vectors.

Normalized entropy and an inverted normalized standard deviation are
provided as drop-in alternatives for comparison runs.
"""

from __future__ import annotations

import numpy as np

UNIFORM_VARIANCE_FLOOR = 1e-15
SIMPLEX_ATOL = 1e-9


def _as_prob_matrix(v, atol: float = SIMPLEX_ATOL) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"probability vectors need length >= 2, got shape {arr.shape}")
    if np.any(arr < -atol) or np.any(arr > 1.0 + atol):
        raise ValueError("probability entries must lie in [0, 1]")
    sums = arr.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > atol):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise ValueError(f"row {bad} sums to {sums[bad]!r}, not 1")
    return arr


def variance(v) -> float:
    """Population variance of a probability vector (its mean is exactly 1/C)."""
    arr = _as_prob_matrix(v)
    c = arr.shape[1]
    return float(np.mean((arr[0] - 1.0 / c) ** 2))


def min_var(c: int, m: float) -> float:
    """Smallest variance among probability vectors of length `c` with maximum `m`.

    Attained by the vector with one entry at m and the remaining c-1 entries
    at (1-m)/(c-1).
    """
    if c < 2:
        raise ValueError(f"class count must be >= 2, got {c}")
    if not (1.0 / c - SIMPLEX_ATOL <= m <= 1.0 + SIMPLEX_ATOL):
        raise ValueError(f"max probability {m} outside [1/{c}, 1]")
    rest = (1.0 - m) / (c - 1)
    return ((m - 1.0 / c) ** 2 + (c - 1) * (rest - 1.0 / c) ** 2) / c


def _scores(arr: np.ndarray) -> np.ndarray:
    c = arr.shape[1]
    maxes = arr.max(axis=1)
    var = np.mean((arr - 1.0 / c) ** 2, axis=1)
    rest = (1.0 - maxes) / (c - 1)
    minvar = ((maxes - 1.0 / c) ** 2 + (c - 1) * (rest - 1.0 / c) ** 2) / c
    ratio = np.ones_like(var)
    live = var >= UNIFORM_VARIANCE_FLOOR
    ratio[live] = minvar[live] / var[live]
    return np.maximum(1.0 - ratio * maxes, 0.0)


def oui_score(v) -> float:
    """Relabeled state for one probability vector; see module docstring."""
    return float(_scores(_as_prob_matrix(v))[0])


def oui_scores(rows) -> np.ndarray:
    """Vectorized oui_score over a (n, C) matrix of probability vectors."""
    return _scores(_as_prob_matrix(rows))


def entropy_indicator(v) -> float:
    """Shannon entropy normalized by log C, so the range is [0, 1]."""
    return float(entropy_indicators(_as_prob_matrix(v))[0])


def entropy_indicators(rows) -> np.ndarray:
    arr = _as_prob_matrix(rows)
    c = arr.shape[1]
    terms = np.where(arr > 0.0, arr * np.log(np.maximum(arr, 1e-300)), 0.0)
    return -terms.sum(axis=1) / np.log(c)


def sd_indicator(v) -> float:
    """1 - sd(V)/sd_max, where sd_max = sqrt(C-1)/C is the one-hot value.

    Flat (uncertain) vectors score near 1, matching the state-label range of
    the other indicators.
    """
    return float(sd_indicators(_as_prob_matrix(v))[0])


def sd_indicators(rows) -> np.ndarray:
    arr = _as_prob_matrix(rows)
    c = arr.shape[1]
    sd = np.sqrt(np.mean((arr - 1.0 / c) ** 2, axis=1))
    sd_max = np.sqrt(c - 1.0) / c
    return np.maximum(1.0 - sd / sd_max, 0.0)
