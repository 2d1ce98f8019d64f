"""Oracle metrics that need the true values: interval coverage and width of
multiple imputations, negative RMSE, and rankings of methods by score."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ContractError
from .imputers import ImputationSet

__all__ = [
    "CoverageReport",
    "coverage_width",
    "normalize_widths",
    "quadrant",
    "neg_rmse",
    "rank_methods",
    "QUANTILES",
]

QUANTILES = (0.025, 0.975)


@dataclass(frozen=True)
class CoverageReport:
    """Average marginal coverage and width of the per-cell imputation intervals.

    ``normalized_width`` is ``raw_width`` divided by the largest raw width among
    the methods passed to :func:`normalize_widths`; on its own a report is
    normalized against itself.
    """

    method_name: str
    coverage: float
    raw_width: float
    normalized_width: float
    n_cells: int

    @property
    def quadrant(self) -> str:
        return quadrant(self.coverage, self.normalized_width)


def _truth_and_mask(imp: ImputationSet, X_true, mask) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(getattr(X_true, "values", X_true), dtype=float)
    mask = imp.source.mask if mask is None else np.asarray(mask, dtype=bool)
    if truth.shape != imp.source.shape or mask.shape != truth.shape:
        raise ContractError("true data, mask and imputations differ in shape")
    if np.isnan(truth[mask]).any():
        raise ContractError("true values are missing for some masked cells")
    return truth, mask


def coverage_width(imp: ImputationSet, X_true, mask=None) -> CoverageReport:
    """Per missing cell, the 2.5%/97.5% quantiles (linear interpolation) of the
    N imputed values form an interval. Coverage is the share of intervals that
    contain the true value and width their length, each averaged first over the
    missing cells of a row and then over incomplete rows.

    Categorical cells count as covered when the true level was imputed at least
    once; their width is ``(distinct imputed levels - 1) / (levels - 1)``.
    """
    if imp.n_imputations < 2:
        raise ContractError("coverage and width need at least two imputations")
    truth, mask = _truth_and_mask(imp, X_true, mask)
    stack = imp.stacked()
    cat = imp.source.categorical_mask
    n_levels = imp.source.n_levels
    lo, hi = np.quantile(stack, QUANTILES, axis=0, method="linear")
    cover = (truth >= lo) & (truth <= hi)
    width = hi - lo
    for j in np.flatnonzero(cat):
        col = stack[:, :, j]
        rows = np.flatnonzero(mask[:, j])
        for i in rows:
            levels = np.unique(col[:, i])
            cover[i, j] = truth[i, j] in levels
            width[i, j] = (levels.size - 1) / (n_levels[j] - 1) if n_levels[j] > 1 else 0.0
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise ContractError("no missing cells to evaluate")
    counts = mask[rows].sum(axis=1)
    row_cov = np.where(mask[rows], cover[rows], False).sum(axis=1) / counts
    row_wid = np.where(mask[rows], width[rows], 0.0).sum(axis=1) / counts
    cov = float(row_cov.mean())
    raw = float(row_wid.mean())
    return CoverageReport(imp.method_name, cov, raw, 1.0 if raw > 0 else 0.0, int(mask.sum()))


def normalize_widths(reports: Sequence[CoverageReport]) -> list[CoverageReport]:
    """Rescale widths so the widest method on this dataset gets 1."""
    top = max((r.raw_width for r in reports), default=0.0)
    return [replace(r, normalized_width=(r.raw_width / top if top > 0 else 0.0)) for r in reports]


def quadrant(coverage: float, normalized_width: float) -> str:
    """I: wide and covering, II: narrow and covering, III: narrow and missing, IV: wide and missing."""
    if coverage >= 0.5:
        return "I" if normalized_width >= 0.5 else "II"
    return "IV" if normalized_width >= 0.5 else "III"


def neg_rmse(imp: ImputationSet, X_true, mask=None) -> float:
    """Minus the root mean squared error over missing numeric cells and completions."""
    truth, mask = _truth_and_mask(imp, X_true, mask)
    cells = mask & ~imp.source.categorical_mask[None, :]
    if not cells.any():
        raise ContractError("no missing numeric cells")
    err = imp.stacked()[:, cells] - truth[cells][None, :]
    return -float(np.sqrt(np.mean(err**2)))


def rank_methods(reports) -> list[int]:
    """Competition ranks by descending score (1 = best); exact ties share the better rank."""
    scores = np.array([getattr(r, "score", r) for r in reports], dtype=float)
    if np.isnan(scores).any():
        raise ContractError("cannot rank a NaN score")
    return [int(1 + np.sum(scores > s)) for s in scores]
