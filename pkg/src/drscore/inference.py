"""Half-sampling jackknife variance, normal confidence intervals and the
superiority / inferiority tests of an imputation score against the true data."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from . import _rng
from .errors import ContractError, DegenerateError, DRScoreError

__all__ = [
    "JackknifeResult",
    "ProprietyResult",
    "half_splits",
    "jackknife_variance",
    "variance_from_halves",
    "confidence_interval",
    "propriety_test",
    "p_value_bucket",
    "BUCKETS",
    "MIN_REPLICATES",
]

DEFAULT_B = 30
MIN_REPLICATES = 5
BUCKETS = ((0.0, 0.01), (0.01, 0.05), (0.05, 0.1), (0.1, 1.0))


def variance_from_halves(halves: Sequence[tuple[float, float]]) -> float:
    """Mean squared deviation of the half-pair averages around their mean."""
    if len(halves) == 0:
        raise ContractError("no replicate pairs")
    bars = np.array([(a + b) / 2.0 for a, b in halves], dtype=float)
    return float(np.mean((bars - bars.mean()) ** 2))


@dataclass(frozen=True)
class JackknifeResult:
    point: float
    variance: float
    B: int
    halves: tuple[tuple[float, float], ...]
    n_dropped: int = 0

    def recompute(self) -> float:
        return variance_from_halves(self.halves)


def _n_rows(X) -> int:
    return int(X.n_rows) if hasattr(X, "n_rows") else len(X)


def _take(X, rows: np.ndarray):
    if hasattr(X, "take_rows"):
        return X.take_rows(rows)
    return np.asarray(X)[rows]


def half_splits(n: int, B: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """``B`` random splits of ``range(n)`` into two sorted halves; an odd row goes to the first."""
    if n < 4:
        raise ContractError("half-sampling needs at least 4 rows")
    if B < 1:
        raise ContractError("B must be >= 1")
    out = []
    cut = (n + 1) // 2
    for b in range(B):
        perm = _rng.rng(seed, _rng.JACKKNIFE, b).permutation(n)
        out.append((np.sort(perm[:cut]), np.sort(perm[cut:])))
    return out


def jackknife_variance(
    statistic: Callable,
    X,
    B: int = DEFAULT_B,
    seed: int = 0,
    point: float | None = None,
) -> JackknifeResult:
    """Variance of ``statistic(X)`` from ``B`` random half splits.

    ``statistic`` is called on ``X.take_rows(rows)`` (or ``X[rows]`` for
    arrays). A replicate whose statistic raises a package error on either half
    is dropped with a warning; fewer than five surviving replicates is an error.
    ``point`` skips re-evaluating the statistic on the full data.
    """
    n = _n_rows(X)
    halves = []
    dropped = 0
    for b, (h1, h2) in enumerate(half_splits(n, B, seed)):
        try:
            pair = (float(statistic(_take(X, h1))), float(statistic(_take(X, h2))))
        except DRScoreError as exc:
            dropped += 1
            warnings.warn(f"jackknife replicate {b} dropped: {exc}", stacklevel=2)
            continue
        halves.append(pair)
    if len(halves) < MIN_REPLICATES:
        raise DegenerateError(
            f"only {len(halves)} of {B} jackknife replicates succeeded (need {MIN_REPLICATES})"
        )
    if point is None:
        point = float(statistic(X))
    return JackknifeResult(float(point), variance_from_halves(halves), len(halves), tuple(halves), dropped)


def confidence_interval(point: float, variance: float, alpha: float = 0.05) -> tuple[float, float]:
    """Two-sided normal interval ``point -/+ z_{1-alpha/2} * sqrt(variance)``."""
    if variance < 0:
        raise ContractError("variance must be non-negative")
    if not 0.0 < alpha < 1.0:
        raise ContractError("alpha must lie in (0, 1)")
    half = float(ndtri(1.0 - alpha / 2.0)) * math.sqrt(variance)
    return (point - half, point + half)


@dataclass(frozen=True)
class ProprietyResult:
    """Outcome of comparing an imputer's score with the true-data score.

    ``D_H`` is score(imputed) - score(true). ``p_superiority`` tests whether the
    imputer beats the truth; ``p_inferiority`` whether it falls short.
    """

    method_name: str
    D_H: float
    sigma: float
    p_superiority: float
    p_inferiority: float
    score: float
    true_score: float
    jackknife: JackknifeResult
    true_halves: tuple[tuple[float, float], ...] = ()
    score_halves: tuple[tuple[float, float], ...] = ()

    @property
    def bucket_superiority(self) -> str:
        return p_value_bucket(self.p_superiority)

    @property
    def bucket_inferiority(self) -> str:
        return p_value_bucket(self.p_inferiority)


def _p_values(D: float, sigma: float, name: str) -> tuple[float, float]:
    if sigma > 0:
        z = D / sigma
        return float(ndtr(-z)), float(ndtr(z))
    if D == 0:
        return 0.5, 0.5
    warnings.warn(f"{name}: zero jackknife spread with D_H = {D:g}; p-values are degenerate", stacklevel=3)
    return (0.0, 1.0) if D > 0 else (1.0, 0.0)


def propriety_test(
    score_H: Callable,
    score_true: Callable,
    X_complete,
    mask,
    B: int = DEFAULT_B,
    seed: int = 0,
    method_name: str = "H",
    true_point: float | None = None,
    true_halves: Sequence[tuple[float, float]] | None = None,
) -> ProprietyResult:
    """Normal-approximation tests of ``D_H = score_H - score_true``.

    Both statistics are called as ``f(X_complete_rows, mask_rows)``: ``score_H``
    must mask, impute and score its input, ``score_true`` scores the complete
    rows under the mask. ``sigma`` comes from the half-sampling variance of the
    per-half differences. Pass ``true_point`` and ``true_halves`` from an
    earlier result (same ``seed`` and ``B``) to reuse the true-data scores.
    """
    full = np.asarray(getattr(X_complete, "values", X_complete), dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if full.shape != mask.shape:
        raise ContractError("mask and complete data differ in shape")

    def sub(rows):
        return _take(X_complete, rows), mask[rows]

    splits = half_splits(full.shape[0], B, seed)
    if true_halves is not None and len(true_halves) != len(splits):
        raise ContractError("true_halves does not match B")
    s_true = float(score_true(X_complete, mask)) if true_point is None else float(true_point)
    s_H = float(score_H(X_complete, mask))
    d_pairs, t_pairs, h_pairs = [], [], []
    dropped = 0
    for b, (h1, h2) in enumerate(splits):
        try:
            if true_halves is None:
                t = (float(score_true(*sub(h1))), float(score_true(*sub(h2))))
            else:
                t = (float(true_halves[b][0]), float(true_halves[b][1]))
            if math.isnan(t[0]) or math.isnan(t[1]):
                raise DegenerateError("the true-data score failed on this replicate")
        except DRScoreError as exc:
            t = (math.nan, math.nan)
            t_pairs.append(t)
            dropped += 1
            warnings.warn(f"{method_name}: replicate {b} dropped: {exc}", stacklevel=2)
            continue
        t_pairs.append(t)
        try:
            hv = (float(score_H(*sub(h1))), float(score_H(*sub(h2))))
        except DRScoreError as exc:
            dropped += 1
            warnings.warn(f"{method_name}: replicate {b} dropped: {exc}", stacklevel=2)
            continue
        h_pairs.append(hv)
        d_pairs.append((hv[0] - t[0], hv[1] - t[1]))
    if len(d_pairs) < MIN_REPLICATES:
        raise DegenerateError(
            f"{method_name}: only {len(d_pairs)} of {B} replicates succeeded (need {MIN_REPLICATES})"
        )
    D = s_H - s_true
    jk = JackknifeResult(D, variance_from_halves(d_pairs), len(d_pairs), tuple(d_pairs), dropped)
    sigma = math.sqrt(jk.variance)
    p_sup, p_inf = _p_values(D, sigma, method_name)
    return ProprietyResult(method_name, D, sigma, p_sup, p_inf, s_H, s_true, jk, tuple(t_pairs), tuple(h_pairs))


def p_value_bucket(p: float) -> str:
    """Label of the bucket ``(lo, hi]`` containing ``p``; 0 joins the first bucket."""
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ContractError(f"p-value {p} outside [0, 1]")
    for lo, hi in BUCKETS:
        if p <= hi:
            return f"({lo:g},{hi:g}]"
    raise AssertionError("unreachable")
