import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drscore import (
    ContractError,
    ForestClassifier,
    ImputationSet,
    IncompleteMatrix,
    NothingToScoreError,
    ProjectionMode,
    ScoreParams,
    ScoreReport,
    ampute_mcar,
    balance_classes,
    dr_iscore,
    gen_gaussian,
    impute,
    impute_sample,
    log_density_ratio,
    score_true_data,
    truncate_prob,
)
from drscore.forest import fit_forest

from oracles import ConstantClassifier, ToyBayesClassifier, toy_expected_score, toy_marginals

TOY_P = np.array([[0.4, 0.1], [0.1, 0.4]])
# -KL(P1 x P2 || P) for the table above, from oracles.toy_expected_score; equals log(0.8)
TOY_TARGET = -0.22314355131420976


class PlainForest:
    """Forest behind the generic classifier interface (not the fused fast path)."""

    def __init__(self, num_trees=5, min_node_size=10, categorical=None):
        self.inner = ForestClassifier(num_trees, min_node_size, categorical)

    def fit(self, features, labels, projection, seed):
        return self.inner.fit(features, labels, projection, seed)


def toy_data(n, seed, P=TOY_P, N=5):
    rng = np.random.default_rng(seed)
    cells = rng.choice(4, size=n, p=P.ravel())
    full = np.column_stack([cells // 2, cells % 2]).astype(float)
    X = ampute_mcar(IncompleteMatrix.from_array(full), 0.3, seed)
    p1, p2 = toy_marginals(P)
    comps = []
    for _ in range(N):
        c = full.copy()
        m = X.mask
        c[m[:, 0], 0] = rng.random(m[:, 0].sum()) < p1[1]
        c[m[:, 1], 1] = rng.random(m[:, 1].sum()) < p2[1]
        comps.append(c)
    return X, ImputationSet(X, tuple(comps), "marginal")


def gaussian_case(n=200, d=3, seed=0, p=0.25, method="sample", N=2):
    full = gen_gaussian(n, d, seed=seed)
    X = ampute_mcar(full, p, seed)
    return full, X, impute(method, X, N, seed)


# ---- truncation and log ratio ------------------------------------------------


def test_truncation_values():
    assert truncate_prob(0.0) == 1e-9
    assert truncate_prob(1.0) == 1 - 1e-9
    assert truncate_prob(0.5) == 0.5
    assert np.array_equal(truncate_prob(np.array([0.0, 0.3, 1.0])), [1e-9, 0.3, 1 - 1e-9])


def test_log_ratio_values():
    assert log_density_ratio(0.5) == 0.0
    assert log_density_ratio(0.75) == pytest.approx(math.log(3), abs=1e-15)
    # log(1e-9 / (1 - 1e-9))
    assert log_density_ratio(1e-9) == pytest.approx(-20.72326583594641, abs=1e-9)


@given(st.floats(0.0, 1.0), st.floats(1e-12, 0.49), st.floats(1e-12, 0.49))
def test_truncation_monotone(p, e1, e2):
    lo, hi = sorted((e1, e2))
    a = log_density_ratio(truncate_prob(p, lo))
    b = log_density_ratio(truncate_prob(p, hi))
    assert np.sign(a) == np.sign(b) or a == 0 or b == 0
    assert abs(a) >= abs(b) - 1e-12
    assert abs(a) <= math.log((1 - lo) / lo) + 1e-9


# ---- balancing ---------------------------------------------------------------


def test_balance_no_pool_needed():
    rows, labels = balance_classes(np.arange(100), np.arange(100, 180), np.arange(500, 550), 0.75, 0)
    imp = rows[labels == 0]
    assert (labels == 1).sum() == (labels == 0).sum() == 100
    assert np.isin(imp, np.arange(100, 180)).all()
    assert set(imp) == set(range(100, 180))


def test_balance_pool_draws():
    real, imp, pool = np.arange(100), np.array([100, 101]), np.arange(500, 550)
    rows, labels = balance_classes(real, imp, pool, 0.75, 3)
    fake = rows[labels == 0]
    assert fake.size == 100 and (labels == 1).sum() == 100
    # ceil(0.75 * 100) - 2 = 73 pool draws, then upsampling of those 75 units
    assert fake[:2].tolist() == [100, 101]
    assert np.isin(fake[2:75], pool).all()
    assert np.isin(fake[75:], fake[:75]).all()


def test_balance_equal_sizes_unchanged():
    rows, labels = balance_classes(np.arange(10), np.arange(10, 20), (), 0.75, 0)
    assert rows.tolist() == list(range(20))
    assert labels.tolist() == [1] * 10 + [0] * 10


def test_balance_small_real_upsampled():
    rows, labels = balance_classes(np.arange(3), np.arange(10, 30), np.arange(40, 50), 0.75, 1)
    assert (labels == 1).sum() == 20
    assert np.isin(rows[labels == 1], np.arange(3)).all()
    assert np.array_equal(rows[labels == 0], np.arange(10, 30))


def test_balance_empty_class():
    with pytest.raises(ContractError):
        balance_classes([], [1, 2])


@given(st.integers(1, 60), st.integers(1, 60), st.integers(0, 30), st.floats(0.05, 0.95), st.integers(0, 999))
def test_balance_always_equal(n_real, n_imp, n_pool, tau, seed):
    rows, labels = balance_classes(np.arange(n_real), np.arange(n_imp) + 100, np.arange(n_pool) + 200, tau, seed)
    assert (labels == 1).sum() == (labels == 0).sum() == max(n_real, n_imp)


# ---- estimator identities ------------------------------------------------------


@given(st.integers(0, 1000))
def test_constant_oracle_scores_zero(seed):
    _, X, imp = gaussian_case(60, 3, seed)
    rep = dr_iscore(X, imp, ScoreParams(num_proj=4, seed=seed), ConstantClassifier(0.5))
    assert rep.score == 0.0
    assert all(v == 0.0 for v in rep.per_imputation)


def test_constant_oracle_other_value():
    _, X, imp = gaussian_case(80, 3, 1)
    rep = dr_iscore(X, imp, ScoreParams(num_proj=3, seed=1), ConstantClassifier(0.75))
    assert rep.score == pytest.approx(math.log(3), abs=1e-12)


def test_decomposition_is_exact():
    _, X, imp = gaussian_case(150, 4, 2, N=3)
    rep = dr_iscore(X, imp, ScoreParams(num_proj=6, seed=2))
    assert rep.score == math.fsum(rep.per_imputation) / 3
    assert len(rep.per_imputation) == 3
    assert rep.n_projections_used + rep.n_projections_skipped == 3 * 6 * len(rep.per_pattern)


def test_per_imputation_is_mean_of_patterns():
    _, X, imp = gaussian_case(150, 3, 3, N=1)
    rep = dr_iscore(X, imp, ScoreParams(num_proj=5, seed=3))
    assert rep.per_imputation[0] == math.fsum(rep.per_pattern.values()) / len(rep.per_pattern)


def test_deterministic_and_thread_invariant():
    _, X, imp = gaussian_case(200, 3, 4, N=3)
    a = dr_iscore(X, imp, ScoreParams(num_proj=8, seed=4))
    b = dr_iscore(X, imp, ScoreParams(num_proj=8, seed=4, threads=4))
    assert a == b
    assert a != dr_iscore(X, imp, ScoreParams(num_proj=8, seed=5))


def test_fused_path_equals_generic_path():
    full = gen_gaussian(150, 3, seed=6)
    X = ampute_mcar(full, 0.3, 6)
    imp = impute_sample(X, 2, 6)
    params = ScoreParams(num_proj=6, seed=6)
    fused = dr_iscore(X, imp, params)
    generic = dr_iscore(X, imp, params, PlainForest())
    assert fused == generic


def test_fused_path_equals_generic_with_categorical_and_singletons():
    rng = np.random.default_rng(7)
    n = 120
    c = rng.integers(0, 3, n).astype(float)
    x = c + rng.normal(size=n)
    z = x + rng.normal(size=n)
    from drscore import NUMERIC, categorical

    full = IncompleteMatrix.from_array(np.column_stack([c, x, z, -z]), [categorical(3), NUMERIC, NUMERIC, NUMERIC])
    X = ampute_mcar(full, 0.15, 7)
    vals = X.values.copy()
    vals[:2] = full.values[:2]
    vals[0, :3] = np.nan
    vals[1, [0, 2, 3]] = np.nan
    X = IncompleteMatrix.from_array(vals, X.kinds, X.column_names, X.levels)
    imp = impute("donor", X, 2, 7)
    params = ScoreParams(num_proj=5, seed=7, min_node_size=3)
    fused = dr_iscore(X, imp, params)
    generic = dr_iscore(X, imp, params, PlainForest(5, 3, (True, False, False, False)))
    assert fused.n_singleton_patterns_merged > 0
    assert fused == generic


def test_true_data_equals_hand_built_set():
    full, X, _ = gaussian_case(150, 3, 8)
    params = ScoreParams(num_proj=5, seed=8)
    a = score_true_data(full.values, X.mask, params)
    b = dr_iscore(X, ImputationSet(X, (full.values,), "true"), params)
    assert a == b


def test_nothing_to_score():
    full = gen_gaussian(20, 2, seed=0)
    with pytest.raises(NothingToScoreError, match="nothing to score"):
        score_true_data(full.values, np.zeros((20, 2), bool))
    with pytest.raises(NothingToScoreError):
        dr_iscore(full, ImputationSet(full, (full.values,)))


def test_mismatched_imputation_set():
    _, X, imp = gaussian_case(50, 3, 0)
    _, Y, _ = gaussian_case(50, 3, 1)
    with pytest.raises(ContractError):
        dr_iscore(Y, imp)


def test_no_reference_rows_at_all():
    vals = np.random.default_rng(0).normal(size=(40, 2))
    vals[:20, 0] = np.nan
    vals[20:, 1] = np.nan
    X = IncompleteMatrix.from_array(vals)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(NothingToScoreError):
            dr_iscore(X, impute_sample(X, 1, 0), ScoreParams(num_proj=5, seed=0))


def test_group_without_reference_rows_is_skipped():
    # pattern 010 only admits projections containing columns 0 and 1, which no row has complete
    vals = np.random.default_rng(0).normal(size=(40, 3))
    vals[:20, 0] = np.nan
    vals[20:, 1] = np.nan
    vals[:5, 2] = np.nan
    X = IncompleteMatrix.from_array(vals)
    with pytest.warns(UserWarning, match="010"):
        rep = dr_iscore(X, impute_sample(X, 1, 0), ScoreParams(num_proj=5, seed=0))
    assert rep.n_groups_skipped == 1
    assert set(rep.per_pattern) == {"100", "101"}
    assert rep.n_projections_skipped > 0
    assert rep.score == math.fsum(rep.per_pattern.values()) / 2


def test_singletons_group_reported():
    vals = np.random.default_rng(2).normal(size=(60, 4))
    vals[0, 0] = np.nan
    vals[1, 1] = np.nan
    vals[2:20, 2] = np.nan
    X = IncompleteMatrix.from_array(vals)
    rep = dr_iscore(X, impute_sample(X, 1, 0), ScoreParams(num_proj=4, seed=0, min_node_size=2))
    assert rep.n_singleton_patterns_merged == 2
    assert set(rep.per_pattern) == {"0010", "singletons"}


def test_projection_modes_run():
    _, X, imp = gaussian_case(120, 4, 9, p=0.2)
    full = dr_iscore(X, imp, ScoreParams(num_proj=3, seed=9, projection_mode=ProjectionMode("full")))
    assert math.isfinite(full.score)


def test_report_interval_invariant():
    with pytest.raises(ContractError):
        ScoreReport(0.0, (0.0,), {}, 1, variance=1.0)
    r = ScoreReport(0.0, (0.0,), {"1": 0.0}, 1).with_interval(1.0, (-2.0, 2.0))
    assert r.to_dict()["ci_lo"] == -2.0 and r.to_dict()["variance"] == 1.0


def test_params_validation():
    for bad in (dict(tau=1.0), dict(tau=0.0), dict(truncation_eps=0.5), dict(num_proj=0), dict(min_node_size=0)):
        with pytest.raises(ContractError):
            ScoreParams(**bad)


# ---- oracle KL ---------------------------------------------------------------------


def test_toy_target_frozen():
    assert toy_expected_score(TOY_P) == pytest.approx(TOY_TARGET, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1])
def test_bayes_oracle_matches_enumerated_kl(seed):
    X, imp = toy_data(10_000, seed)
    rep = dr_iscore(X, imp, ScoreParams(seed=seed), ToyBayesClassifier(TOY_P))
    assert abs(rep.score - TOY_TARGET) <= 0.05


def test_forest_close_to_oracle_on_toy():
    X, imp = toy_data(10_000, 3)
    params = ScoreParams(seed=3)
    oracle = dr_iscore(X, imp, params, ToyBayesClassifier(TOY_P)).score
    forest = dr_iscore(X, imp, params).score
    assert abs(forest - oracle) < 0.1


def test_forest_classifier_seed_used():
    X = np.random.default_rng(0).normal(size=(100, 2))
    y = (np.arange(100) % 2).astype(float)
    a = fit_forest(X, y, seed=1).predict_proba(X)
    b = fit_forest(X, y, seed=2).predict_proba(X)
    assert not np.array_equal(a, b)
