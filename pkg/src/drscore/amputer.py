"""Synthetic data generators and amputation (MCAR, logistic MAR, spiral MAR)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import _rng
from .data import IncompleteMatrix, Pattern, as_matrix
from .errors import ContractError, DegenerateError

__all__ = [
    "MarSpec",
    "mcar_mask",
    "ampute_mcar",
    "random_mar_spec",
    "ampute_mar",
    "ampute_spiral",
    "gen_spiral",
    "gen_gaussian",
]

log = logging.getLogger(__name__)

SPIRAL_TURNS = 3
SPIRAL_BAND = 0.3
MAR_TOLERANCE = 0.01


def _complete(X) -> IncompleteMatrix:
    X = as_matrix(X)
    if not X.is_complete:
        raise ContractError("amputation needs a fully observed matrix")
    return X


def mcar_mask(n: int, d: int, p_miss: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Independent Bernoulli(p_miss) mask; fully missing rows are re-drawn.

    Returns the mask and the number of row re-draws.
    """
    if not 0.0 <= p_miss < 1.0:
        raise ContractError(f"p_miss must lie in [0, 1), got {p_miss}")
    mask = rng.random((n, d)) < p_miss
    redraws = 0
    bad = np.flatnonzero(mask.all(axis=1))
    while bad.size:
        redraws += bad.size
        mask[bad] = rng.random((bad.size, d)) < p_miss
        bad = bad[mask[bad].all(axis=1)]
    return mask, redraws


def ampute_mcar(X, p_miss: float, seed: int) -> IncompleteMatrix:
    """Set every cell missing independently with probability ``p_miss``."""
    X = _complete(X)
    mask, redraws = mcar_mask(X.n_rows, X.n_cols, p_miss, _rng.rng(seed, _rng.AMPUTE, 0))
    if redraws:
        log.info("ampute_mcar: re-drew %d fully missing rows", redraws)
    return X.with_mask(mask)


@dataclass(frozen=True)
class MarSpec:
    """Candidate patterns, their frequencies and logistic weights on observed coordinates."""

    patterns: tuple[Pattern, ...]
    frequencies: np.ndarray
    weight_vectors: np.ndarray
    overall_p_miss: float = 0.2

    def __post_init__(self) -> None:
        freq = np.asarray(self.frequencies, dtype=float)
        w = np.asarray(self.weight_vectors, dtype=float)
        k = len(self.patterns)
        if k == 0 or freq.shape != (k,) or w.ndim != 2 or w.shape[0] != k:
            raise ContractError("MarSpec: patterns, frequencies and weights disagree in size")
        if abs(freq.sum() - 1.0) > 1e-12 or (freq < 0).any():
            raise ContractError("MarSpec: frequencies must be a probability vector")
        for p, wk in zip(self.patterns, w):
            bits = p.array
            if len(bits) != w.shape[1] or bits.all() or not bits.any():
                raise ContractError(f"MarSpec: invalid pattern {p}")
            if np.any(wk[bits] != 0):
                raise ContractError(f"MarSpec: pattern {p} weights missing coordinates")
        if not 0.0 <= self.overall_p_miss < 1.0:
            raise ContractError("MarSpec: overall_p_miss must lie in [0, 1)")
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "weight_vectors", w)

    @property
    def d(self) -> int:
        return self.weight_vectors.shape[1]


def random_mar_spec(
    d: int, n_patterns: int | None = None, seed: int = 0, overall_p_miss: float = 0.2
) -> MarSpec:
    """Draw ``n_patterns`` (default ceil(d/2)) valid masks with equal frequencies."""
    if d < 2:
        raise ContractError("MAR amputation needs at least two columns")
    k = math.ceil(d / 2) if n_patterns is None else int(n_patterns)
    if k < 1:
        raise ContractError("n_patterns must be >= 1")
    rng = _rng.rng(seed, _rng.AMPUTE, 1)
    patterns = []
    while len(patterns) < k:
        bits = rng.random(d) < 0.5
        if bits.any() and not bits.all():
            patterns.append(Pattern.of(bits.astype(int)))
    weights = rng.standard_normal((k, d))
    for i, p in enumerate(patterns):
        weights[i, p.array] = 0.0
    return MarSpec(tuple(patterns), np.full(k, 1.0 / k), weights, overall_p_miss)


def ampute_mar(X, spec: MarSpec, seed: int) -> IncompleteMatrix:
    """Logistic MAR amputation.

    Each row draws a candidate pattern; it receives that pattern when
    ``u < sigmoid(w . z_obs + b)`` with ``z`` the standardized row. The shared
    offset ``b`` is bisected on the realized draws so the missing-cell fraction
    lands within 0.01 of ``spec.overall_p_miss``.
    """
    X = _complete(X)
    n, d = X.shape
    if d != spec.d:
        raise ContractError(f"MarSpec is for {spec.d} columns, data has {d}")
    if spec.overall_p_miss == 0.0 or n == 0:
        return X
    vals = X.values
    sd = vals.std(axis=0)
    z = (vals - vals.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    rng = _rng.rng(seed, _rng.AMPUTE, 2)
    assigned = rng.choice(len(spec.patterns), size=n, p=spec.frequencies)
    u = rng.random(n)
    lin = np.einsum("ij,ij->i", z, spec.weight_vectors[assigned])
    pat = np.array([p.bits for p in spec.patterns], dtype=bool)[assigned]
    cells = pat.sum(axis=1)
    total = n * d
    target = spec.overall_p_miss

    def frac(b: float) -> float:
        return float(cells[u < expit(lin + b)].sum()) / total

    span = 60.0 + float(np.abs(lin).max())
    lo, hi = -span, span
    if frac(hi) < target - MAR_TOLERANCE:
        raise DegenerateError(
            f"MAR calibration cannot reach p_miss={target:.3f} with these patterns "
            f"(max {frac(hi):.3f}); use a smaller p_miss"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    b = lo if abs(frac(lo) - target) <= abs(frac(hi) - target) else hi
    if abs(frac(b) - target) > MAR_TOLERANCE:
        raise DegenerateError(f"MAR calibration missed p_miss={target:.3f}; use a smaller p_miss")
    hit = u < expit(lin + b)
    mask = pat & hit[:, None]
    return X.with_mask(mask)


def ampute_spiral(X, p_miss: float, seed: int) -> IncompleteMatrix:
    """Two-variable MAR rule of the spiral example.

    ``x2`` goes missing with probability ``p_miss`` when ``|x1| > 0.3``; ``x1``
    goes missing with probability ``p_miss`` when ``x2`` lies in ``[-0.3, 0.3]``.
    If both fire on one row, ``x1`` stays observed.
    """
    X = _complete(X)
    if X.n_cols != 2:
        raise ContractError("the spiral MAR rule needs exactly two columns")
    if not 0.0 <= p_miss < 1.0:
        raise ContractError(f"p_miss must lie in [0, 1), got {p_miss}")
    x1, x2 = X.values[:, 0], X.values[:, 1]
    u = _rng.rng(seed, _rng.AMPUTE, 3).random((X.n_rows, 2))
    miss2 = (np.abs(x1) > SPIRAL_BAND) & (u[:, 1] < p_miss)
    miss1 = (np.abs(x2) <= SPIRAL_BAND) & (u[:, 0] < p_miss) & ~miss2
    return X.with_mask(np.column_stack([miss1, miss2]))


def gen_spiral(n: int, noise_sd: float = 0.05, seed: int = 0, turns: float = SPIRAL_TURNS) -> IncompleteMatrix:
    """Two interleaved Archimedean spirals in [-1, 1]^2 plus Gaussian noise.

    Each arm makes ``turns`` turns while its radius grows linearly from 0 to 1;
    the second arm is the first rotated by pi. The first ``ceil(n/2)`` rows
    belong to the first arm.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    if turns <= 0:
        raise ContractError("turns must be positive")
    n1 = (n + 1) // 2
    arms = []
    for sign, m in ((1.0, n1), (-1.0, n - n1)):
        t = np.linspace(0.0, 1.0, m)
        theta = 2.0 * np.pi * turns * t
        arms.append(sign * np.column_stack([t * np.cos(theta), t * np.sin(theta)]))
    pts = np.vstack(arms)
    if noise_sd > 0:
        pts = pts + _rng.rng(seed, _rng.AMPUTE, 4).normal(0.0, noise_sd, pts.shape)
    return IncompleteMatrix.from_array(pts, column_names=["x1", "x2"])


def gen_gaussian(n: int, d: int = 4, rho: float = 0.8, seed: int = 0) -> IncompleteMatrix:
    """Zero-mean Gaussian sample with AR(1) correlation ``rho**|i-j|``."""
    idx = np.arange(d)
    cov = rho ** np.abs(idx[:, None] - idx[None, :])
    pts = _rng.rng(seed, _rng.AMPUTE, 5).multivariate_normal(np.zeros(d), cov, size=n, method="cholesky")
    return IncompleteMatrix.from_array(pts)
