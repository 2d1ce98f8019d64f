"""Incomplete datasets, missingness patterns and projections onto variable subsets.

Missing cells are stored as NaN inside a float matrix; categorical columns hold
integer level codes (as floats) with a per-column label dictionary.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractError, ParseError

__all__ = [
    "ColumnKind",
    "NUMERIC",
    "categorical",
    "IncompleteMatrix",
    "Pattern",
    "PatternGroup",
    "Grouping",
    "Projection",
    "load_csv",
    "write_csv",
    "pattern_groups",
    "project_rows",
    "complete_on",
]

DEFAULT_MISSING = "NA"


@dataclass(frozen=True)
class ColumnKind:
    """Column type; ``n_levels == 0`` means numeric."""

    n_levels: int = 0

    @property
    def is_categorical(self) -> bool:
        return self.n_levels > 0

    def __str__(self) -> str:
        return f"categorical({self.n_levels})" if self.is_categorical else "numeric"


NUMERIC = ColumnKind()


def categorical(n_levels: int) -> ColumnKind:
    if n_levels < 1:
        raise ValueError("a categorical column needs at least one level")
    return ColumnKind(int(n_levels))


@dataclass(frozen=True, eq=False)
class IncompleteMatrix:
    """An n x d table whose cells are either present or missing (NaN).

    Instances are immutable: the value array is copied and marked read-only.
    Use :meth:`from_array` rather than the raw constructor.
    """

    values: np.ndarray
    kinds: tuple[ColumnKind, ...]
    column_names: tuple[str, ...]
    levels: tuple[tuple[str, ...] | None, ...] = field(default=())

    @classmethod
    def from_array(
        cls,
        values,
        kinds: Sequence[ColumnKind] | None = None,
        column_names: Sequence[str] | None = None,
        levels: Sequence[Sequence[str] | None] | None = None,
    ) -> "IncompleteMatrix":
        arr = np.array(values, dtype=float, copy=True)
        if arr.ndim != 2:
            raise ContractError("data must be a two-dimensional table")
        n, d = arr.shape
        if d == 0:
            raise ContractError("data must have at least one column")
        if kinds is None:
            kinds = [NUMERIC] * d
        if column_names is None:
            column_names = [f"x{j + 1}" for j in range(d)]
        if levels is None:
            levels = [None] * d
        kinds, column_names, levels = tuple(kinds), tuple(map(str, column_names)), tuple(levels)
        if not (len(kinds) == len(column_names) == len(levels) == d):
            raise ContractError("column metadata does not match the number of columns")
        if len(set(column_names)) != d:
            raise ContractError("duplicate column names")
        if np.isinf(arr).any():
            raise ContractError("present numeric values must be finite")
        norm_levels = []
        for j, kind in enumerate(kinds):
            lv = levels[j]
            if kind.is_categorical:
                col = arr[:, j]
                obs = col[~np.isnan(col)]
                if obs.size and (
                    np.any(obs < 0) or np.any(obs >= kind.n_levels) or np.any(obs != np.floor(obs))
                ):
                    raise ContractError(
                        f"column {column_names[j]!r}: categorical codes must be integers in "
                        f"[0, {kind.n_levels})"
                    )
                if lv is None:
                    lv = tuple(str(k) for k in range(kind.n_levels))
                lv = tuple(lv)
                if len(lv) != kind.n_levels:
                    raise ContractError(f"column {column_names[j]!r}: level dictionary size mismatch")
                norm_levels.append(lv)
            else:
                norm_levels.append(None)
        empty = np.isnan(arr).all(axis=1)
        if empty.any():
            raise ContractError(f"row {int(np.flatnonzero(empty)[0])} has every cell missing")
        arr.setflags(write=False)
        return cls(arr, kinds, column_names, tuple(norm_levels))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def mask(self) -> np.ndarray:
        """Boolean n x d array, True where the cell is missing."""
        return np.isnan(self.values)

    @property
    def is_complete(self) -> bool:
        return not np.isnan(self.values).any()

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([k.is_categorical for k in self.kinds], dtype=bool)

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([k.n_levels for k in self.kinds], dtype=np.int64)

    def cell(self, i: int, j: int) -> float | None:
        """Value of cell (i, j), or None when missing."""
        v = self.values[i, j]
        return None if math.isnan(v) else float(v)

    def with_values(self, values) -> "IncompleteMatrix":
        """Same column metadata, new cell values."""
        return IncompleteMatrix.from_array(values, self.kinds, self.column_names, self.levels)

    def with_mask(self, mask) -> "IncompleteMatrix":
        """Hide the cells where ``mask`` is True."""
        vals = np.array(self.values)
        vals[np.asarray(mask, dtype=bool)] = np.nan
        return self.with_values(vals)

    def take_rows(self, rows) -> "IncompleteMatrix":
        return self.with_values(self.values[np.asarray(rows, dtype=np.int64)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IncompleteMatrix):
            return NotImplemented
        return (
            self.kinds == other.kinds
            and self.column_names == other.column_names
            and self.levels == other.levels
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None  # type: ignore[assignment]


def as_matrix(X) -> IncompleteMatrix:
    """Coerce an array-like to an :class:`IncompleteMatrix` (identity for matrices)."""
    if isinstance(X, IncompleteMatrix):
        return X
    return IncompleteMatrix.from_array(X)


@dataclass(frozen=True, order=True)
class Pattern:
    """Missingness pattern: ``bits[j] == 1`` means coordinate j is missing."""

    bits: tuple[int, ...]

    @classmethod
    def of(cls, bits) -> "Pattern":
        return cls(tuple(int(b) for b in bits))

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def missing(self) -> np.ndarray:
        return np.array([j for j, b in enumerate(self.bits) if b], dtype=np.int64)

    @property
    def observed(self) -> np.ndarray:
        return np.array([j for j, b in enumerate(self.bits) if not b], dtype=np.int64)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    @property
    def key(self) -> str:
        return "".join(map(str, self.bits))

    def __str__(self) -> str:
        return "(" + ",".join(map(str, self.bits)) + ")"


@dataclass(frozen=True)
class PatternGroup:
    pattern: Pattern
    rows: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)


class Grouping(NamedTuple):
    groups: list[PatternGroup]
    reference: np.ndarray


@dataclass(frozen=True)
class Projection:
    """A sorted, nonempty index set A with the pattern projected onto it."""

    indices: tuple[int, ...]
    projected_pattern: Pattern

    def __post_init__(self) -> None:
        if not self.indices:
            raise ContractError("projection must contain at least one index")
        if list(self.indices) != sorted(set(self.indices)):
            raise ContractError("projection indices must be sorted and distinct")
        if len(self.projected_pattern) != len(self.indices):
            raise ContractError("projected pattern length must equal the projection size")

    @classmethod
    def from_pattern(cls, indices, pattern: Pattern) -> "Projection":
        idx = tuple(sorted(int(i) for i in indices))
        return cls(idx, Pattern(tuple(pattern.bits[i] for i in idx)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.indices)


def _is_missing_token(cell: str, token: str) -> bool:
    s = cell.strip()
    return s == "" or s == token or s == DEFAULT_MISSING


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".levels.json")


def load_csv(
    path,
    missing_token: str = DEFAULT_MISSING,
    levels: dict[str, Sequence[str]] | None = None,
) -> IncompleteMatrix:
    """Read a CSV file with a header row into an :class:`IncompleteMatrix`.

    Empty cells and cells equal to ``missing_token`` (or ``"NA"``) are missing.
    A column is numeric when every present cell parses as a finite float and
    categorical when none does. Categorical labels are coded in lexicographic
    order unless ``levels`` (or a ``<file>.levels.json`` sidecar) fixes them.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: empty file, header row required")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise ParseError(f"{path}: duplicate column name {dup!r}")
    d = len(header)
    for i, r in enumerate(body):
        if len(r) != d:
            raise ParseError(f"{path}: row {i} has {len(r)} cells, expected {d}")
    if levels is None and _sidecar(path).exists():
        with open(_sidecar(path), encoding="utf-8") as fh:
            levels = json.load(fh)
    levels = levels or {}

    n = len(body)
    values = np.full((n, d), np.nan)
    kinds: list[ColumnKind] = []
    col_levels: list[tuple[str, ...] | None] = []
    for j, name in enumerate(header):
        cells = [r[j] for r in body]
        present = [(i, c.strip()) for i, c in enumerate(cells) if not _is_missing_token(c, missing_token)]
        parsed = []
        for i, c in present:
            try:
                parsed.append((i, float(c)))
            except ValueError:
                parsed.append((i, None))
        n_num = sum(v is not None for _, v in parsed)
        if name in levels or (present and n_num == 0):
            lv = tuple(levels[name]) if name in levels else tuple(sorted({c for _, c in present}))
            code = {lab: k for k, lab in enumerate(lv)}
            for i, c in present:
                if c not in code:
                    raise ParseError(f"{path}: column {name!r}: unknown level {c!r}")
                values[i, j] = code[c]
            kinds.append(categorical(max(len(lv), 1)))
            col_levels.append(lv if lv else ("",))
        elif n_num == len(parsed):
            for i, v in parsed:
                if not math.isfinite(v):
                    raise ParseError(f"{path}: column {name!r}: non-finite value in row {i}")
                values[i, j] = v
            kinds.append(NUMERIC)
            col_levels.append(None)
        else:
            raise ParseError(f"{path}: column {name!r} mixes numeric and non-numeric cells")
    empty = np.isnan(values).all(axis=1) if d else np.zeros(n, bool)
    if empty.any():
        raise ParseError(f"{path}: row {int(np.flatnonzero(empty)[0])} has every cell missing")
    return IncompleteMatrix.from_array(values, kinds, header, col_levels)


def _fmt(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_csv(X: IncompleteMatrix, path, missing_token: str = DEFAULT_MISSING) -> None:
    """Write ``X`` as CSV; categorical levels also go to a JSON sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(X.column_names)
        for row in X.values:
            out = []
            for j, v in enumerate(row):
                if math.isnan(v):
                    out.append(missing_token)
                elif X.kinds[j].is_categorical:
                    out.append(X.levels[j][int(v)])
                else:
                    out.append(_fmt(float(v)))
            w.writerow(out)
    if X.categorical_mask.any():
        side = {
            X.column_names[j]: list(X.levels[j])
            for j in range(X.n_cols)
            if X.kinds[j].is_categorical
        }
        with open(_sidecar(path), "w", encoding="utf-8") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)


def pattern_groups(X: IncompleteMatrix) -> Grouping:
    """Group incomplete rows by missingness pattern.

    Groups are ordered by descending size, ties broken by lexicographic pattern
    order. Fully observed rows are returned separately as ``reference``.
    """
    mask = X.mask.astype(np.int8)
    incomplete = mask.any(axis=1)
    reference = np.flatnonzero(~incomplete)
    rows = np.flatnonzero(incomplete)
    if rows.size == 0:
        return Grouping([], reference)
    uniq, inverse = np.unique(mask[rows], axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    groups = [
        PatternGroup(Pattern.of(uniq[k]), rows[inverse == k]) for k in range(len(uniq))
    ]
    groups.sort(key=lambda g: (-len(g), g.pattern.bits))
    return Grouping(groups, reference)


def _indices(A) -> np.ndarray:
    if isinstance(A, Projection):
        return A.array
    return np.array(sorted(int(a) for a in A), dtype=np.int64)


def complete_on(X: IncompleteMatrix, A) -> np.ndarray:
    """Rows with no missing cell among the columns of ``A``."""
    idx = _indices(A)
    return np.flatnonzero(~np.isnan(X.values[:, idx]).any(axis=1))


def project_rows(X: IncompleteMatrix, A, rows=None, imputed=None) -> np.ndarray:
    """Dense ``|rows| x |A|`` table of the rows restricted to the columns of ``A``.

    ``imputed`` (an n x d array or matrix agreeing with ``X`` on observed cells)
    supplies values for missing coordinates; without it, selecting a missing
    cell is a contract violation.
    """
    idx = _indices(A)
    rows = np.arange(X.n_rows) if rows is None else np.asarray(rows, dtype=np.int64)
    src = X.values if imputed is None else getattr(imputed, "values", imputed)
    out = np.asarray(src, dtype=float)[np.ix_(rows, idx)]
    if np.isnan(out).any():
        r, c = np.argwhere(np.isnan(out))[0]
        raise ContractError(
            f"row {int(rows[r])} is missing column {int(idx[c])} and no imputed value was given"
        )
    return out
