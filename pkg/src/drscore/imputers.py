"""Baseline multiple-imputation methods.

Four behaviour classes: column mean/mode (``mean``), chained linear regression
means (``regress-mean``), marginal hot-deck (``sample``) and chained
predictive-mean-matching donor draws (``donor``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _rng
from .data import IncompleteMatrix
from .errors import ContractError, CouplingError, DegenerateError

__all__ = [
    "ImputationSet",
    "check_coupling",
    "impute_mean",
    "impute_sample",
    "impute_regress_mean",
    "impute_donor",
    "IMPUTERS",
    "impute",
]

RIDGE = 1e-8
DEFAULT_CYCLES = 5
DEFAULT_DONORS = 5


def check_coupling(source: IncompleteMatrix, completions) -> None:
    """Raise :class:`CouplingError` at the first completion/cell that breaks coupling."""
    obs = ~source.mask
    for c, comp in enumerate(completions):
        vals = np.asarray(getattr(comp, "values", comp), dtype=float)
        if vals.shape != source.shape:
            raise ContractError(
                f"completion {c} has shape {vals.shape}, expected {source.shape}"
            )
        if np.isnan(vals).any():
            r, j = np.argwhere(np.isnan(vals))[0]
            raise ContractError(f"completion {c} still has a missing cell at (row={r}, col={j})")
        bad = obs & (vals != source.values)
        if bad.any():
            r, j = np.argwhere(bad)[0]
            raise CouplingError(int(r), int(j), c)


@dataclass(frozen=True, eq=False)
class ImputationSet:
    """N completed copies of ``source`` that agree with it on every present cell."""

    source: IncompleteMatrix
    completions: tuple[np.ndarray, ...]
    method_name: str = "custom"
    seed: int | None = None

    def __post_init__(self) -> None:
        comps = tuple(np.array(getattr(c, "values", c), dtype=float) for c in self.completions)
        if not comps:
            raise ContractError("an imputation set needs at least one completion")
        check_coupling(self.source, comps)
        for c in comps:
            c.setflags(write=False)
        object.__setattr__(self, "completions", comps)

    @property
    def n_rows(self) -> int:
        return self.source.n_rows

    @property
    def n_imputations(self) -> int:
        return len(self.completions)

    def stacked(self) -> np.ndarray:
        """Completions as an ``N x n x d`` array."""
        return np.stack(self.completions)

    def completion_matrix(self, j: int) -> IncompleteMatrix:
        return self.source.with_values(self.completions[j])

    def take_rows(self, rows) -> "ImputationSet":
        rows = np.asarray(rows, dtype=np.int64)
        return ImputationSet(
            self.source.take_rows(rows),
            tuple(c[rows] for c in self.completions),
            self.method_name,
            self.seed,
        )


def _require_observed_columns(X: IncompleteMatrix) -> None:
    empty = X.mask.all(axis=0)
    if empty.any():
        raise ContractError(f"column {X.column_names[int(np.flatnonzero(empty)[0])]!r} is entirely missing")


def _mode(col: np.ndarray) -> float:
    codes, counts = np.unique(col, return_counts=True)
    return float(codes[np.argmax(counts)])


def _mean_fill(X: IncompleteMatrix) -> np.ndarray:
    vals = np.array(X.values)
    mask = X.mask
    for j, kind in enumerate(X.kinds):
        obs = vals[~mask[:, j], j]
        fill = _mode(obs) if kind.is_categorical else float(obs.mean())
        vals[mask[:, j], j] = fill
    return vals


def impute_mean(X: IncompleteMatrix, N: int = 5, seed: int = 0) -> ImputationSet:
    """Column mean for numeric cells, column mode (lowest code on ties) for categorical."""
    _require_observed_columns(X)
    filled = _mean_fill(X)
    return ImputationSet(X, tuple(filled for _ in range(N)), "mean", seed)


def impute_sample(X: IncompleteMatrix, N: int = 5, seed: int = 0) -> ImputationSet:
    """Fill each missing cell with a uniform draw from its column's observed values."""
    _require_observed_columns(X)
    mask = X.mask
    comps = []
    for c in range(N):
        rng = _rng.rng(seed, _rng.IMPUTE, 1, c)
        vals = np.array(X.values)
        for j in range(X.n_cols):
            miss = mask[:, j]
            if miss.any():
                donors = X.values[~miss, j]
                vals[miss, j] = donors[rng.integers(0, donors.size, size=int(miss.sum()))]
        comps.append(vals)
    return ImputationSet(X, tuple(comps), "sample", seed)


def _visit_order(mask: np.ndarray) -> list[int]:
    counts = mask.sum(axis=0)
    return [int(j) for j in np.argsort(counts, kind="stable") if counts[j] > 0]


def _design(vals: np.ndarray, j: int) -> np.ndarray:
    others = np.delete(vals, j, axis=1)
    return np.column_stack([np.ones(len(vals)), others])


def _least_squares(Z: np.ndarray, y: np.ndarray, name: str) -> np.ndarray:
    """Normal-equation fit, with a tiny ridge when the Gram matrix is singular."""
    G = Z.T @ Z
    rhs = Z.T @ y
    if np.linalg.matrix_rank(G) == G.shape[0]:
        try:
            return np.linalg.solve(G, rhs)
        except np.linalg.LinAlgError:
            pass
    try:
        beta = np.linalg.solve(G + RIDGE * np.eye(G.shape[0]), rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateError(f"degenerate regression design for column {name!r}") from exc
    if not np.all(np.isfinite(beta)):
        raise DegenerateError(f"degenerate regression design for column {name!r}")
    return beta


def _round_level(pred: np.ndarray, n_levels: int) -> np.ndarray:
    return np.clip(np.rint(pred), 0, n_levels - 1)


def _chained(
    X: IncompleteMatrix,
    n_cycles: int,
    fill: Callable[[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    """Chained-equations sweeps: mean init, then each incomplete column in
    ascending missing-count order gets ``fill(j, preds_obs, preds_miss, y_obs, vals)``."""
    mask = X.mask
    vals = _mean_fill(X)
    d = X.n_cols
    if d == 1:
        return vals
    order = _visit_order(mask)
    for j in order:
        need = d + 2
        if int((~mask[:, j]).sum()) < need:
            raise ContractError(
                f"column {X.column_names[j]!r} needs at least {need} observed rows for regression"
            )
    for _ in range(n_cycles):
        for j in order:
            obs = ~mask[:, j]
            Z = _design(vals, j)
            beta = _least_squares(Z[obs], vals[obs, j], X.column_names[j])
            pred = Z @ beta
            vals[~obs, j] = fill(j, pred[obs], pred[~obs], vals[obs, j], vals)
    return vals


def impute_regress_mean(
    X: IncompleteMatrix, N: int = 5, seed: int = 0, n_cycles: int = DEFAULT_CYCLES
) -> ImputationSet:
    """Chained linear-regression conditional means (deterministic; N identical copies)."""
    _require_observed_columns(X)
    kinds = X.kinds

    def fill(j, _pred_obs, pred_miss, _y_obs, _vals):
        if kinds[j].is_categorical:
            return _round_level(pred_miss, kinds[j].n_levels)
        return pred_miss

    filled = _chained(X, n_cycles, fill)
    return ImputationSet(X, tuple(filled for _ in range(N)), "regress-mean", seed)


def impute_donor(
    X: IncompleteMatrix,
    N: int = 5,
    seed: int = 0,
    k_donors: int = DEFAULT_DONORS,
    n_cycles: int = DEFAULT_CYCLES,
) -> ImputationSet:
    """Chained predictive mean matching.

    Every missing cell copies the observed value of a donor drawn uniformly
    among the ``k_donors`` observed rows whose predicted value is closest to
    the incomplete row's prediction. Each completion runs its own chain.
    """
    _require_observed_columns(X)
    if k_donors < 1:
        raise ContractError("k_donors must be >= 1")
    comps = []
    warned = False
    for c in range(N):
        rng = _rng.rng(seed, _rng.IMPUTE, 2, c)

        def fill(j, pred_obs, pred_miss, y_obs, _vals):
            nonlocal warned
            k = min(k_donors, pred_obs.size)
            if k < k_donors and not warned:
                warnings.warn(
                    f"only {pred_obs.size} donor candidates, fewer than k_donors={k_donors}",
                    stacklevel=4,
                )
                warned = True
            order = np.argsort(pred_obs, kind="stable")
            sorted_pred = pred_obs[order]
            # the k nearest values of a sorted array lie within k slots of the insertion point
            pos = np.searchsorted(sorted_pred, pred_miss)
            window = pos[:, None] + np.arange(-k, k)[None, :]
            valid = (window >= 0) & (window < sorted_pred.size)
            window = np.clip(window, 0, sorted_pred.size - 1)
            dist = np.where(valid, np.abs(sorted_pred[window] - pred_miss[:, None]), np.inf)
            nearest = np.take_along_axis(window, np.argsort(dist, axis=1, kind="stable")[:, :k], axis=1)
            pick = rng.integers(0, k, size=pred_miss.size)
            return y_obs[order[nearest[np.arange(pred_miss.size), pick]]]

        comps.append(_chained(X, n_cycles, fill))
    return ImputationSet(X, tuple(comps), "donor", seed)


IMPUTERS: dict[str, Callable[..., ImputationSet]] = {
    "mean": impute_mean,
    "sample": impute_sample,
    "regress-mean": impute_regress_mean,
    "donor": impute_donor,
}


def impute(method: str, X: IncompleteMatrix, N: int = 5, seed: int = 0) -> ImputationSet:
    try:
        fn = IMPUTERS[method]
    except KeyError:
        raise ContractError(f"unknown imputation method {method!r}; choose from {sorted(IMPUTERS)}") from None
    return fn(X, N=N, seed=seed)
