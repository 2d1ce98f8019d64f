import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drscore import (
    ContractError,
    CouplingError,
    NUMERIC,
    ImputationSet,
    IncompleteMatrix,
    ampute_mcar,
    categorical,
    gen_gaussian,
    impute,
    impute_donor,
    impute_mean,
    impute_regress_mean,
    impute_sample,
)
from drscore.imputers import IMPUTERS

NAN = np.nan


def _mixed(seed, n=60):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    c = (x + rng.normal(scale=0.5, size=n) > 0).astype(float) + (x > 1)
    z = 2 * x + rng.normal(scale=0.3, size=n)
    full = IncompleteMatrix.from_array(np.column_stack([x, c, z]), kinds=[NUMERIC, categorical(3), NUMERIC])
    return ampute_mcar(full, 0.2, seed)


def test_mean_column():
    X = IncompleteMatrix.from_array([[1.0, 0], [NAN, 1], [3.0, 2]])
    imp = impute_mean(X, N=5)
    assert imp.n_imputations == 5
    assert imp.completions[0][1, 0] == 2.0
    assert all(np.array_equal(c, imp.completions[0]) for c in imp.completions)


def test_mean_categorical_mode_lowest_tie():
    X = IncompleteMatrix.from_array([[0, 1], [0, 1], [1, 1], [NAN, 1]], kinds=[categorical(2), NUMERIC])
    assert impute_mean(X, 1).completions[0][3, 0] == 0.0
    Y = IncompleteMatrix.from_array([[1, 1], [0, 1], [NAN, 1]], kinds=[categorical(2), NUMERIC])
    assert impute_mean(Y, 1).completions[0][2, 0] == 0.0


def test_all_missing_column_rejected():
    X = IncompleteMatrix.from_array([[NAN, 1.0], [NAN, 2.0]])
    for name in IMPUTERS:
        with pytest.raises(ContractError):
            impute(name, X, 2, 0)


def test_unknown_method():
    with pytest.raises(ContractError, match="unknown"):
        impute("knn", IncompleteMatrix.from_array([[1.0]]), 1, 0)


def test_sample_single_donor():
    X = IncompleteMatrix.from_array([[1.0, 5.0], [NAN, 6.0]])
    imp = impute_sample(X, N=20, seed=3)
    assert all(c[1, 0] == 1.0 for c in imp.completions)


def test_sample_frequency_half():
    X = IncompleteMatrix.from_array([[1.0, 0.0], [2.0, 0.0], [NAN, 0.0]])
    draws = np.array([c[2, 0] for c in impute_sample(X, N=10_000, seed=1).completions])
    assert set(np.unique(draws)) == {1.0, 2.0}
    # 4 sigma of a Bernoulli(1/2) mean over 1e4 draws is 0.02
    assert abs((draws == 1.0).mean() - 0.5) < 0.02


def test_sample_completions_differ():
    X = ampute_mcar(gen_gaussian(200, 3, seed=0), 0.2, 0)
    imp = impute_sample(X, 2, 0)
    assert not np.array_equal(imp.completions[0], imp.completions[1])


def test_regress_recovers_exact_linear_relation():
    rng = np.random.default_rng(0)
    x1 = rng.normal(size=100)
    vals = np.column_stack([x1, 2 * x1])
    vals[::4, 1] = NAN
    imp = impute_regress_mean(IncompleteMatrix.from_array(vals), N=2)
    c = imp.completions[0]
    assert np.max(np.abs(c[::4, 1] - 2 * x1[::4])) < 1e-6
    assert np.array_equal(imp.completions[0], imp.completions[1])


def test_regress_single_column_has_nothing_to_fill():
    # a one-column table cannot hold a missing cell without a fully missing row
    X = IncompleteMatrix.from_array([[1.0], [5.0]])
    assert np.array_equal(impute_regress_mean(X, 1).completions[0], X.values)


def test_regress_too_few_rows():
    X = IncompleteMatrix.from_array([[1.0, 2.0], [NAN, 3.0], [2.0, 1.0]])
    with pytest.raises(ContractError, match="observed rows"):
        impute_regress_mean(X, 1)


def test_regress_collinear_predictors_fall_back_to_ridge():
    rng = np.random.default_rng(4)
    x = rng.normal(size=50)
    vals = np.column_stack([x, x, 3 * x + 1])
    vals[:10, 2] = NAN
    c = impute_regress_mean(IncompleteMatrix.from_array(vals), 1).completions[0]
    assert np.allclose(c[:10, 2], 3 * x[:10] + 1, atol=1e-5)


def test_regress_deterministic():
    X = ampute_mcar(gen_gaussian(200, 3, seed=1), 0.2, 1)
    a = impute_regress_mean(X, 3, seed=1)
    b = impute_regress_mean(X, 3, seed=99)
    assert np.array_equal(a.completions[0], b.completions[0])


def test_donor_single_donor_is_deterministic():
    X = ampute_mcar(gen_gaussian(200, 3, seed=2), 0.2, 2)
    imp = impute_donor(X, N=3, seed=2, k_donors=1)
    assert np.array_equal(imp.completions[0], imp.completions[1])
    assert np.array_equal(imp.completions[0], impute_donor(X, N=1, seed=7, k_donors=1).completions[0])


def test_donor_few_candidates_warns():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(8, 2))
    vals[:3, 0] = NAN
    with pytest.warns(UserWarning, match="donor candidates"):
        impute_donor(IncompleteMatrix.from_array(vals), N=1, k_donors=6)


def test_donor_conditional_spread():
    rho = 0.9
    rng = np.random.default_rng(5)
    cov = [[1, rho], [rho, 1]]
    full = IncompleteMatrix.from_array(rng.multivariate_normal([0, 0], cov, size=2000))
    X = ampute_mcar(full, 0.2, 5)
    imp = impute_donor(X, N=5, seed=5)
    rows = X.mask[:, 1] & ~X.mask[:, 0]
    resid = np.concatenate([c[rows, 1] - rho * c[rows, 0] for c in imp.completions])
    target = np.sqrt(1 - rho**2)
    assert abs(resid.std() / target - 1) < 0.25


@pytest.mark.parametrize("method", sorted(IMPUTERS))
@given(seed=st.integers(0, 10_000))
def test_coupling_and_support(method, seed):
    X = _mixed(seed)
    imp = impute(method, X, 3, seed)
    obs = ~X.mask
    for c in imp.completions:
        assert not np.isnan(c).any()
        assert np.array_equal(c[obs], X.values[obs])
        col = c[:, 1]
        assert set(np.unique(col)) <= {0.0, 1.0, 2.0}
        if method in ("sample", "donor"):
            for j in range(3):
                assert np.isin(c[X.mask[:, j], j], X.values[obs[:, j], j]).all()


@pytest.mark.parametrize("method", sorted(IMPUTERS))
def test_imputers_deterministic(method):
    X = _mixed(3, 120)
    a, b = impute(method, X, 4, 11), impute(method, X, 4, 11)
    assert all(np.array_equal(p, q) for p, q in zip(a.completions, b.completions))


def test_imputation_set_coupling_violation():
    X = IncompleteMatrix.from_array([[1.0, NAN], [2.0, 3.0]])
    bad = np.array([[1.0, 0.0], [2.0, 4.0]])
    with pytest.raises(CouplingError) as e:
        ImputationSet(X, (np.array([[1.0, 0.0], [2.0, 3.0]]), bad))
    assert (e.value.row, e.value.col, e.value.completion) == (1, 1, 1)


def test_imputation_set_rejects_leftover_missing():
    X = IncompleteMatrix.from_array([[1.0, NAN], [2.0, 3.0]])
    with pytest.raises(ContractError):
        ImputationSet(X, (X.values,))


def test_take_rows():
    X = ampute_mcar(gen_gaussian(30, 3, seed=0), 0.3, 0)
    imp = impute_sample(X, 2, 0)
    sub = imp.take_rows([3, 1])
    assert sub.n_rows == 2
    assert np.array_equal(sub.completions[1], imp.completions[1][[3, 1]])
