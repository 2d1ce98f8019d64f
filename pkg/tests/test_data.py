import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drscore import (
    NUMERIC,
    ContractError,
    IncompleteMatrix,
    ParseError,
    Pattern,
    Projection,
    categorical,
    complete_on,
    gen_spiral,
    load_csv,
    pattern_groups,
    project_rows,
    write_csv,
    ampute_spiral,
)


def _write(tmp_path, text, name="x.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_two_by_two(tmp_path):
    X = load_csv(_write(tmp_path, "a,b\n1,NA\n2,3\n"))
    assert X.shape == (2, 2)
    assert X.cell(0, 1) is None
    assert X.cell(1, 0) == 2.0
    assert X.column_names == ("a", "b")


def test_empty_cell_is_missing(tmp_path):
    X = load_csv(_write(tmp_path, "a,b\n1,\n2,3\n"))
    assert X.mask.tolist() == [[False, True], [False, False]]


def test_custom_missing_token(tmp_path):
    X = load_csv(_write(tmp_path, "a,b\n1,?\n2,3\n"), missing_token="?")
    assert X.mask[0, 1]


def test_duplicate_header_rejected(tmp_path):
    with pytest.raises(ParseError, match="duplicate"):
        load_csv(_write(tmp_path, "x,x\n1,2\n"))


def test_categorical_lexicographic_codes(tmp_path):
    X = load_csv(_write(tmp_path, "c,n\nred,1\nblue,2\nred,3\n"))
    assert X.kinds[0] == categorical(2)
    assert X.kinds[1] == NUMERIC
    assert X.levels[0] == ("blue", "red")
    assert X.values[:, 0].tolist() == [1.0, 0.0, 1.0]


def test_mixed_column_rejected(tmp_path):
    with pytest.raises(ParseError, match="'a'"):
        load_csv(_write(tmp_path, "a,b\n1,2\nred,3\n"))


def test_all_missing_row_rejected(tmp_path):
    with pytest.raises(ParseError, match="row 1"):
        load_csv(_write(tmp_path, "a,b\n1,2\nNA,NA\n"))


def test_ragged_row_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, "a,b\n1,2\n3\n"))


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_csv(tmp_path / "nope.csv")


def test_non_finite_rejected(tmp_path):
    with pytest.raises(ParseError):
        load_csv(_write(tmp_path, "a\n1\ninf\n"))


def test_categorical_sidecar_roundtrip(tmp_path):
    X = load_csv(_write(tmp_path, "c,n\nred,1\nNA,2\ngreen,NA\n"))
    out = tmp_path / "y.csv"
    write_csv(X, out)
    side = json.loads((tmp_path / "y.csv.levels.json").read_text())
    assert side == {"c": ["green", "red"]}
    assert load_csv(out) == X


def test_sidecar_fixes_unseen_levels(tmp_path):
    p = _write(tmp_path, "c,n\nb,1\nNA,2\nb,3\n")
    (tmp_path / "x.csv.levels.json").write_text(json.dumps({"c": ["a", "b", "z"]}))
    X = load_csv(p)
    assert X.levels[0] == ("a", "b", "z")
    assert X.values[0, 0] == 1.0


def test_explicit_levels_reject_unknown(tmp_path):
    with pytest.raises(ParseError, match="unknown level"):
        load_csv(_write(tmp_path, "c\nq\n"), levels={"c": ["a"]})


@given(
    arrays(
        float,
        st.tuples(st.integers(1, 6), st.integers(1, 4)),
        elements=st.one_of(st.just(np.nan), st.floats(-1e6, 1e6, allow_nan=False, width=64)),
    )
)
def test_csv_roundtrip_is_exact(tmp_path_factory, vals):
    vals[np.isnan(vals).all(axis=1), 0] = 1.5
    X = IncompleteMatrix.from_array(vals)
    p = tmp_path_factory.mktemp("rt") / "r.csv"
    write_csv(X, p)
    Y = load_csv(p)
    assert np.array_equal(X.values, Y.values, equal_nan=True)


def test_matrix_is_immutable():
    X = IncompleteMatrix.from_array([[1.0, np.nan]])
    with pytest.raises(ValueError):
        X.values[0, 0] = 3.0


def test_from_array_rejects_bad_codes():
    with pytest.raises(ContractError):
        IncompleteMatrix.from_array([[2.0]], kinds=[categorical(2)])
    with pytest.raises(ContractError):
        IncompleteMatrix.from_array([[0.5]], kinds=[categorical(2)])


def test_from_array_rejects_fully_missing_row():
    with pytest.raises(ContractError, match="row 0"):
        IncompleteMatrix.from_array([[np.nan, np.nan], [1.0, 2.0]])


def test_groups_of_complete_matrix():
    g = pattern_groups(IncompleteMatrix.from_array(np.ones((3, 2))))
    assert g.groups == []
    assert g.reference.tolist() == [0, 1, 2]


def test_groups_by_size():
    X = IncompleteMatrix.from_array([[np.nan, 1], [1, np.nan], [np.nan, 2]])
    g = pattern_groups(X)
    assert [grp.pattern for grp in g.groups] == [Pattern((1, 0)), Pattern((0, 1))]
    assert g.groups[0].rows.tolist() == [0, 2]
    assert g.groups[1].rows.tolist() == [1]
    assert g.reference.size == 0


@given(arrays(bool, st.tuples(st.integers(1, 30), st.integers(2, 5))))
def test_groups_partition_rows(mask):
    mask[mask.all(axis=1), 0] = False
    vals = np.where(mask, np.nan, 1.0)
    g = pattern_groups(IncompleteMatrix.from_array(vals))
    rows = np.concatenate([grp.rows for grp in g.groups] + [g.reference])
    assert sorted(rows.tolist()) == list(range(mask.shape[0]))
    for grp in g.groups:
        assert (mask[grp.rows] == grp.pattern.array).all()
    sizes = [len(grp) for grp in g.groups]
    assert sizes == sorted(sizes, reverse=True)


def test_project_row_example():
    X = IncompleteMatrix.from_array([[np.nan, 1, np.nan, 2]])
    assert project_rows(X, [1, 3]).tolist() == [[1.0, 2.0]]


def test_project_identity_and_column():
    vals = np.arange(15.0).reshape(5, 3)
    X = IncompleteMatrix.from_array(vals)
    assert np.array_equal(project_rows(X, [0, 1, 2]), vals)
    assert np.array_equal(project_rows(X, [2]), vals[:, [2]])


def test_project_missing_without_imputation_fails():
    X = IncompleteMatrix.from_array([[np.nan, 1.0]])
    with pytest.raises(ContractError):
        project_rows(X, [0, 1])
    assert project_rows(X, [0, 1], imputed=np.array([[7.0, 1.0]])).tolist() == [[7.0, 1.0]]


def test_complete_on_examples():
    X = IncompleteMatrix.from_array([[np.nan, 1], [2, 3], [4, np.nan]])
    assert complete_on(X, [1]).tolist() == [0, 1]
    assert complete_on(X, [0, 1]).tolist() == [1]
    assert complete_on(X, Projection.from_pattern([0], Pattern((1, 0)))).tolist() == [1, 2]


def test_complete_on_matches_reference_rows():
    X = ampute_spiral(gen_spiral(1000, seed=3), 0.3, 3)
    assert np.array_equal(complete_on(X, [0, 1]), pattern_groups(X).reference)


def test_projection_pattern_restriction():
    p = Projection.from_pattern([3, 0], Pattern((1, 0, 1, 0)))
    assert p.indices == (0, 3)
    assert p.projected_pattern == Pattern((1, 0))
    with pytest.raises(ContractError):
        Projection((), Pattern(()))
