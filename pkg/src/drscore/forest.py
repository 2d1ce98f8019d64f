"""Probability random forest.

Small, fully grown Gini trees on bootstrap samples with every feature a split
candidate at every node. Leaves store the class-1 frequency, so the forest
average estimates P(Y = 1 | x) rather than a majority vote.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import _kernels
from .data import Projection
from .errors import ContractError

__all__ = [
    "Tree",
    "ForestModel",
    "fit_forest",
    "predict_prob",
    "oob_error",
    "Classifier",
    "ProbabilityModel",
    "ForestClassifier",
]

DEFAULT_TREES = 5
DEFAULT_MIN_NODE = 10


@dataclass(frozen=True)
class Tree:
    """Flat node arrays; ``feature[i] < 0`` marks a leaf.

    Numeric splits send ``x <= threshold`` left, categorical splits send
    ``x == threshold`` (a level code) left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    p1: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    categorical: np.ndarray
    n_train: int
    oob_indices: tuple[np.ndarray, ...]
    projection: Projection | None = None
    _packed: tuple = field(default=(), repr=False)

    @property
    def n_features(self) -> int:
        return self.categorical.size

    def predict_proba(self, X) -> np.ndarray:
        """Class-1 probability for every row of ``X``."""
        X = _as_features(X, self.n_features)
        feat, thr, left, right, p1 = self._packed
        return _kernels.predict_forest(X, self.categorical, feat, thr, left, right, p1)

    def tree_probs(self, X) -> np.ndarray:
        X = _as_features(X, self.n_features)
        feat, thr, left, right, p1 = self._packed
        return _kernels.tree_leaf_probs(X, self.categorical, feat, thr, left, right, p1)


def _as_features(X, k: int | None = None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ContractError("features must be a 2-d table")
    if k is not None and X.shape[1] != k:
        raise ContractError(f"expected {k} features, got {X.shape[1]}")
    if np.isnan(X).any():
        raise ContractError("features contain a missing value")
    return np.ascontiguousarray(X)


def _build_model(out, categorical, n_train, projection) -> ForestModel:
    feat, thr, left, right, p1, nsamp, n_nodes, counts = out
    trees = tuple(
        Tree(feat[t, :m], thr[t, :m], left[t, :m], right[t, :m], p1[t, :m], nsamp[t, :m])
        for t, m in enumerate(n_nodes)
    )
    oob = tuple(np.flatnonzero(c == 0) for c in counts)
    return ForestModel(trees, categorical, n_train, oob, projection, (feat, thr, left, right, p1))


def fit_forest(
    features,
    labels,
    num_trees: int = DEFAULT_TREES,
    min_node_size: int = DEFAULT_MIN_NODE,
    seed: int = 0,
    categorical=None,
    bootstrap: bool = True,
    projection: Projection | None = None,
) -> ForestModel:
    """Fit a probability forest on ``features`` (rows) and binary ``labels``.

    Parameters
    ----------
    features:
        ``n x k`` table without missing values. Categorical columns hold level codes.
    labels:
        0/1 vector; both classes must be present.
    categorical:
        Optional boolean flag per feature selecting one-vs-rest level splits.
    bootstrap:
        Disable to grow every tree on the full training table (test hook).
    """
    X = _as_features(features)
    y = np.asarray(labels, dtype=float).ravel()
    n, k = X.shape
    if y.size != n:
        raise ContractError("labels and features differ in length")
    if n < 2:
        raise ContractError("need at least two training rows")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ContractError("labels must be 0/1")
    if y.min() == y.max():
        raise ContractError("both classes must be present")
    if num_trees < 1 or min_node_size < 1:
        raise ContractError("num_trees and min_node_size must be >= 1")
    cat = np.zeros(k, dtype=bool) if categorical is None else np.asarray(categorical, dtype=bool).copy()
    if cat.size != k:
        raise ContractError("categorical flags do not match the feature count")
    order0 = np.argsort(X, axis=0, kind="stable").T.copy()
    out = _kernels.fit_forest_seeded(
        np.int64(seed & 0x7FFFFFFF), X, y, np.arange(n), order0, cat, num_trees, float(min_node_size), bootstrap
    )
    return _build_model(out, cat, n, projection)


def predict_prob(model: ForestModel, x) -> np.ndarray | float:
    """Mean leaf class-1 frequency; a float for a single row."""
    x = np.asarray(x, dtype=float)
    p = model.predict_proba(x)
    return float(p[0]) if x.ndim == 1 else p


def oob_error(model: ForestModel, features, labels) -> float:
    """Out-of-bag misclassification rate by majority vote.

    Each tree votes 1 when its leaf frequency exceeds 0.5. Rows that are in
    every bootstrap sample are skipped; a tied vote counts as half an error.
    """
    X = _as_features(features, model.n_features)
    y = np.asarray(labels, dtype=float).ravel()
    if X.shape[0] != model.n_train or y.size != model.n_train:
        raise ContractError("oob_error needs the training rows of the model")
    probs = model.tree_probs(X)
    votes = np.zeros(model.n_train)
    n_oob = np.zeros(model.n_train)
    for t, idx in enumerate(model.oob_indices):
        n_oob[idx] += 1
        votes[idx] += probs[t, idx] > 0.5
    seen = n_oob > 0
    if not seen.any():
        raise ContractError("no row is out of bag in any tree")
    skipped = int((~seen).sum())
    if skipped:
        warnings.warn(f"{skipped} rows were never out of bag and are skipped", stacklevel=2)
    frac1 = votes[seen] / n_oob[seen]
    truth = y[seen]
    err = np.where(frac1 == 0.5, 0.5, ((frac1 > 0.5) != (truth == 1.0)).astype(float))
    return float(err.mean())


class ProbabilityModel(Protocol):
    def predict_proba(self, X) -> np.ndarray: ...


class Classifier(Protocol):
    """Anything that can estimate P(real | x) on one projection.

    ``fit`` receives the balanced training table (label 1 = fully observed
    reference rows, 0 = imputed rows), the projection it lives on and an
    integer seed.
    """

    def fit(self, features: np.ndarray, labels: np.ndarray, projection: Projection, seed: int) -> ProbabilityModel: ...


@dataclass(frozen=True)
class ForestClassifier:
    """The default density-ratio classifier."""

    num_trees: int = DEFAULT_TREES
    min_node_size: int = DEFAULT_MIN_NODE
    categorical: tuple[bool, ...] | None = None

    def fit(self, features, labels, projection: Projection, seed: int) -> ForestModel:
        cat = None
        if self.categorical is not None:
            cat = np.asarray(self.categorical, dtype=bool)[projection.array]
        return fit_forest(
            features, labels, self.num_trees, self.min_node_size, seed, cat, True, projection
        )
