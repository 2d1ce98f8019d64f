"""Exception hierarchy. The CLI maps each class to an exit code."""

from __future__ import annotations


class DRScoreError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ParseError(DRScoreError, ValueError):
    """Malformed input file or unparseable column."""

    exit_code = 1


class ContractError(DRScoreError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = 2


class CouplingError(ContractError):
    """A completion disagrees with the incomplete matrix on an observed cell."""

    def __init__(self, row: int, col: int, completion: int = 0) -> None:
        self.row = row
        self.col = col
        self.completion = completion
        super().__init__(
            f"completion {completion} alters observed cell (row={row}, col={col})"
        )


class NothingToScoreError(ContractError):
    """The incomplete matrix has no row with a missing value."""

    def __init__(self, msg: str = "nothing to score: no incomplete rows") -> None:
        super().__init__(msg)


class DegenerateError(DRScoreError, ArithmeticError):
    """Numerical degeneracy (singular design, failed calibration, too few replicates)."""

    exit_code = 3
