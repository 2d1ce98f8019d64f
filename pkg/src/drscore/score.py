"""Imputation scoring by projected density-ratio estimation.

For every completion, every missingness-pattern group and every sampled
projection ``A``, a classifier learns to tell fully observed rows (label 1)
from the group's imputed rows (label 0) on the columns of ``A``. The mean of
``log(p / (1 - p))`` over held-out imputed rows estimates the negative
divergence between imputed and true distributions on ``A``; higher is better.

Averaging runs over rows, then projections, then pattern groups (unweighted),
then completions.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, _rng
from .data import IncompleteMatrix, Pattern, Projection, as_matrix, pattern_groups
from .errors import ContractError, NothingToScoreError
from .forest import Classifier, ForestClassifier
from .imputers import ImputationSet
from .projection import UNRESTRICTED, ProjectionMode, default_num_proj, sample_projection_masks

__all__ = [
    "ScoreParams",
    "ScoreReport",
    "truncate_prob",
    "log_density_ratio",
    "balance_classes",
    "dr_iscore",
    "score_true_data",
    "SINGLETONS",
]

SINGLETONS = "singletons"
_SEED_MAX = 2**31 - 1


@dataclass(frozen=True)
class ScoreParams:
    """Estimator settings. ``num_proj=None`` picks a default from the column count.

    ``threads`` only caps parallelism; it never changes the result.
    """

    num_proj: int | None = None
    num_trees_per_proj: int = 5
    min_node_size: int = 10
    tau: float = 0.75
    truncation_eps: float = 1e-9
    projection_mode: ProjectionMode = UNRESTRICTED
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ContractError(f"tau must lie in (0, 1), got {self.tau}")
        if not 0.0 < self.truncation_eps < 0.5:
            raise ContractError(f"truncation_eps must lie in (0, 0.5), got {self.truncation_eps}")
        for name in ("num_trees_per_proj", "min_node_size", "threads"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.num_proj is not None and self.num_proj < 1:
            raise ContractError("num_proj must be >= 1")
        if self.seed is None:
            raise ContractError("an explicit seed is required")

    def resolved_num_proj(self, d: int) -> int:
        return default_num_proj(d) if self.num_proj is None else int(self.num_proj)


@dataclass(frozen=True)
class ScoreReport:
    """Result of :func:`dr_iscore`.

    ``per_pattern`` maps a pattern key (``"0110"``, or ``"singletons"`` for the
    merged group) to its value averaged over the completions in which it was scored.
    """

    score: float
    per_imputation: tuple[float, ...]
    per_pattern: dict[str, float]
    n_projections_used: int
    n_projections_skipped: int = 0
    n_singleton_patterns_merged: int = 0
    n_groups_skipped: int = 0
    variance: float | None = None
    ci: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if (self.variance is None) != (self.ci is None):
            raise ContractError("ci must be present exactly when variance is")

    def with_interval(self, variance: float, ci: tuple[float, float]) -> "ScoreReport":
        return replace(self, variance=float(variance), ci=(float(ci[0]), float(ci[1])))

    def to_dict(self) -> dict:
        out = {
            "score": self.score,
            "per_imputation": list(self.per_imputation),
            "per_pattern": dict(sorted(self.per_pattern.items())),
            "n_projections_used": self.n_projections_used,
            "n_projections_skipped": self.n_projections_skipped,
            "n_singleton_patterns_merged": self.n_singleton_patterns_merged,
            "n_groups_skipped": self.n_groups_skipped,
        }
        if self.variance is not None:
            out["variance"] = self.variance
            out["ci_lo"], out["ci_hi"] = self.ci
        return out


def truncate_prob(p, eps: float = 1e-9):
    """Clip probabilities to ``[eps, 1 - eps]``."""
    out = np.minimum(np.maximum(p, eps), 1.0 - eps)
    return float(out) if np.ndim(out) == 0 else out


def log_density_ratio(p_hat):
    """``log(p / (1 - p))`` for already truncated probabilities."""
    p_hat = np.asarray(p_hat, dtype=float)
    out = np.log(p_hat) - np.log1p(-p_hat)
    return float(out) if out.ndim == 0 else out


def balance_classes(real_rows, imputed_rows, pool_rows=(), tau: float = 0.75, seed: int = 0):
    """Balanced training multiset.

    Returns ``(rows, labels)`` with label 1 for reference rows and 0 for imputed
    (or pool) rows, equally many of each. When the imputed class is smaller than
    ``tau`` times the reference class, pool rows are drawn first until it
    reaches ``ceil(tau * n_real)``; the smaller class is then upsampled with
    replacement.
    """
    real = np.asarray(real_rows, dtype=np.int64).ravel()
    imp = np.asarray(imputed_rows, dtype=np.int64).ravel()
    pool = np.asarray(pool_rows, dtype=np.int64).ravel()
    if real.size == 0 or imp.size == 0:
        raise ContractError("both classes must be nonempty")
    if not 0.0 < tau < 1.0:
        raise ContractError(f"tau must lie in (0, 1), got {tau}")
    idx_real, idx_imp = _kernels.balance_seeded(
        np.int64(seed & _SEED_MAX), real.size, imp.size, pool.size, float(tau)
    )
    imp_rows = np.concatenate([imp, pool])[idx_imp]
    rows = np.concatenate([real[idx_real], imp_rows])
    labels = np.concatenate([np.ones(idx_real.size), np.zeros(idx_imp.size)])
    return rows, labels


@dataclass(frozen=True)
class _Group:
    key: str
    rows: np.ndarray
    patterns: tuple[Pattern, ...]
    member_pattern: np.ndarray  # index into patterns, per row; used by the merged group

    @property
    def merged(self) -> bool:
        return self.key == SINGLETONS


def _groups(X: IncompleteMatrix) -> tuple[list[_Group], int]:
    grouping = pattern_groups(X)
    if not grouping.groups:
        raise NothingToScoreError()
    big = [g for g in grouping.groups if len(g) >= 2]
    single = [g for g in grouping.groups if len(g) < 2]
    out = [_Group(g.pattern.key, g.rows, (g.pattern,), np.zeros(len(g), dtype=np.int64)) for g in big]
    if single:
        rows = np.concatenate([g.rows for g in single])
        out.append(
            _Group(SINGLETONS, rows, tuple(g.pattern for g in single), np.arange(len(single), dtype=np.int64))
        )
    return out, len(single)


@dataclass(frozen=True)
class _Work:
    """Random draws for one (completion, group) item."""

    half0: np.ndarray
    half1: np.ndarray
    proj: np.ndarray  # P x d membership
    proj_pattern: tuple[Pattern, ...]  # the pattern each projection was adapted to
    seeds: np.ndarray  # P x 2 x 2


def _draw(group: _Group, j: int, g: int, num_proj: int, d: int, params: ScoreParams) -> _Work:
    rng = _rng.rng(params.seed, _rng.SCORE, j, g)
    if group.merged:
        half0 = np.sort(group.rows)
        half1 = half0
        picks = rng.integers(0, len(group.patterns), size=num_proj)
        proj = np.zeros((num_proj, d), dtype=bool)
        for k, pk in enumerate(picks):
            proj[k] = sample_projection_masks(group.patterns[pk], 1, params.projection_mode, rng)[0]
        pats = tuple(group.patterns[pk] for pk in picks)
    else:
        perm = rng.permutation(group.rows)
        cut = (perm.size + 1) // 2
        half0, half1 = np.sort(perm[:cut]), np.sort(perm[cut:])
        proj = sample_projection_masks(group.patterns[0], num_proj, params.projection_mode, rng)
        pats = (group.patterns[0],) * num_proj
    seeds = rng.integers(0, _SEED_MAX, size=(num_proj, 2, 2), dtype=np.int64)
    return _Work(half0, half1, proj, pats, seeds)


def _ranks(vals: np.ndarray) -> np.ndarray:
    order = np.argsort(vals, axis=0, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(vals.shape[0])[:, None], axis=0)
    return rank


def _score_generic(vals, miss, incomplete, in_group, group, work, classifier, params) -> np.ndarray:
    """Same computation as the fused kernel, through the classifier interface."""
    P = work.proj.shape[0]
    out = np.full(P, np.nan)
    eps = params.truncation_eps
    for k in range(P):
        cols = np.flatnonzero(work.proj[k])
        ref, pool = _kernels.projection_rows(miss, incomplete, in_group, cols)
        if ref.size == 0:
            continue
        h0 = _kernels.rows_with_hole(miss, work.half0, cols)
        h1 = h0 if group.merged else _kernels.rows_with_hole(miss, work.half1, cols)
        if h0.size == 0 or h1.size == 0:
            continue
        projection = Projection.from_pattern(cols, work.proj_pattern[k])
        total = 0.0
        count = 0
        for l in range(1 if group.merged else 2):
            train = h0 if l == 0 else h1
            test = h0 if group.merged else (h1 if l == 0 else h0)
            idx_real, idx_imp = _kernels.balance_seeded(work.seeds[k, l, 0], ref.size, train.size, pool.size, params.tau)
            _, _, _, expanded = _kernels.training_units(ref, train, pool, idx_real, idx_imp)
            labels = np.concatenate([np.ones(idx_real.size), np.zeros(idx_imp.size)])
            model = classifier.fit(vals[np.ix_(expanded, cols)], labels, projection, int(work.seeds[k, l, 1]))
            p = np.asarray(model.predict_proba(vals[np.ix_(test, cols)]), dtype=float)
            total += _kernels.log_ratio_sum(np.ascontiguousarray(p), eps)
            count += test.size
        out[k] = total / count
    return out


def _fused_ok(classifier, params: ScoreParams) -> bool:
    return (
        isinstance(classifier, ForestClassifier)
        and classifier.num_trees == params.num_trees_per_proj
        and classifier.min_node_size == params.min_node_size
    )


@dataclass
class _Item:
    j: int
    g: int
    per_proj: np.ndarray | None = None


def dr_iscore(
    X,
    imp: ImputationSet,
    params: ScoreParams | None = None,
    classifier: Classifier | None = None,
) -> ScoreReport:
    """Score the completions in ``imp`` against the observed part of ``X``.

    ``classifier`` defaults to the probability forest configured by
    ``params``; any object with ``fit(features, labels, projection, seed)``
    returning a model with ``predict_proba`` may be injected.
    """
    params = params or ScoreParams()
    X = as_matrix(X)
    if imp.source.shape != X.shape or not np.array_equal(imp.source.mask, X.mask):
        raise ContractError("the imputation set was built for a different incomplete matrix")
    if not np.array_equal(imp.source.values, X.values, equal_nan=True):
        raise ContractError("the imputation set was built for a different incomplete matrix")
    n, d = X.shape
    params.projection_mode.validate(d)
    groups, n_merged = _groups(X)
    num_proj = params.resolved_num_proj(d)
    if classifier is None:
        categorical = tuple(bool(c) for c in X.categorical_mask)
        classifier = ForestClassifier(params.num_trees_per_proj, params.min_node_size, categorical)
    fused = _fused_ok(classifier, params)

    miss = X.mask
    incomplete = miss.any(axis=1)
    cat = X.categorical_mask.astype(bool)
    if fused and classifier.categorical is not None:
        cat = np.asarray(classifier.categorical, dtype=bool)
    memberships = []
    for grp in groups:
        m = np.zeros(n, dtype=bool)
        m[grp.rows] = True
        memberships.append(m)
    works = [[_draw(grp, j, g, num_proj, d, params) for g, grp in enumerate(groups)] for j in range(imp.n_imputations)]
    ranks: dict[int, np.ndarray] = {}
    if fused:
        for j in range(imp.n_imputations):
            ranks[j] = _ranks(imp.completions[j])

    def run(item: _Item) -> _Item:
        vals = np.ascontiguousarray(imp.completions[item.j])
        grp = groups[item.g]
        work = works[item.j][item.g]
        if fused:
            item.per_proj = _kernels.score_group_forest(
                vals, ranks[item.j], miss, incomplete, memberships[item.g], work.half0, work.half1,
                grp.merged, work.proj, work.seeds, cat, params.num_trees_per_proj,
                float(params.min_node_size), float(params.tau), float(params.truncation_eps),
            )
        else:
            item.per_proj = _score_generic(
                vals, miss, incomplete, memberships[item.g], grp, work, classifier, params
            )
        return item

    items = [_Item(j, g) for j in range(imp.n_imputations) for g in range(len(groups))]
    if params.threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=params.threads) as pool:
            items = list(pool.map(run, items))
    else:
        items = [run(it) for it in items]

    # aggregation in canonical (j, g, A) order
    per_imp = []
    pattern_vals: dict[str, list[float]] = {}
    used = skipped = 0
    skipped_groups: set[str] = set()
    for j in range(imp.n_imputations):
        group_means = []
        for it in items[j * len(groups):(j + 1) * len(groups)]:
            vals = it.per_proj[~np.isnan(it.per_proj)]
            used += vals.size
            skipped += it.per_proj.size - vals.size
            key = groups[it.g].key
            if vals.size == 0:
                skipped_groups.add(key)
                continue
            s = math.fsum(vals) / vals.size
            group_means.append(s)
            pattern_vals.setdefault(key, []).append(s)
        if not group_means:
            raise NothingToScoreError("nothing to score: no pattern group has a usable projection")
        per_imp.append(math.fsum(group_means) / len(group_means))
    if skipped_groups:
        warnings.warn(
            f"pattern groups {sorted(skipped_groups)} had no projection with complete reference rows "
            "and were left out",
            stacklevel=2,
        )
    return ScoreReport(
        score=math.fsum(per_imp) / len(per_imp),
        per_imputation=tuple(per_imp),
        per_pattern={k: math.fsum(v) / len(v) for k, v in pattern_vals.items()},
        n_projections_used=used,
        n_projections_skipped=skipped,
        n_singleton_patterns_merged=n_merged,
        n_groups_skipped=len(skipped_groups),
    )


def score_true_data(
    X_complete,
    mask,
    params: ScoreParams | None = None,
    classifier: Classifier | None = None,
) -> ScoreReport:
    """Score the fully observed data itself as the single completion of its masked view."""
    full = as_matrix(X_complete)
    if not full.is_complete:
        raise ContractError("score_true_data needs a fully observed matrix")
    X = full.with_mask(np.asarray(mask, dtype=bool))
    if not X.mask.any():
        raise NothingToScoreError()
    imp = ImputationSet(X, (full.values,), "true", params.seed if params else 0)
    return dr_iscore(X, imp, params, classifier)
