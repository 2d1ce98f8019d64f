"""Pattern-adapted random projections of the variable space.

For a pattern ``m`` with missing set ``Oc`` and observed set ``O`` every
sampled projection ``A`` keeps at least one missing and one observed index:
``r1 ~ U{1..|Oc|}``, ``r2 ~ U{1..min(d - r1, |O|)}``, then a uniform
``r1``-subset of ``Oc`` joined with a uniform ``r2``-subset of ``O``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _rng
from .data import Pattern, PatternGroup, Projection
from .errors import ContractError

__all__ = [
    "ProjectionMode",
    "UNRESTRICTED",
    "FULL",
    "ProjectionPlan",
    "default_num_proj",
    "sample_projections",
    "sample_projection_masks",
    "plan_projections",
]


@dataclass(frozen=True)
class ProjectionMode:
    """``unrestricted``, ``full`` (A is always every column) or ``blocks``.

    In ``blocks`` mode each projection is a union of whole blocks; columns that
    belong to no block are never projected on, and every pattern must leave
    each block either fully missing or fully observed.
    """

    kind: str = "unrestricted"
    blocks: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in ("unrestricted", "full", "blocks"):
            raise ContractError(f"unknown projection mode {self.kind!r}")
        if self.kind == "blocks":
            if not self.blocks:
                raise ContractError("blocks mode needs at least one block")
            seen: set[int] = set()
            norm = []
            for b in self.blocks:
                b = tuple(sorted(int(i) for i in b))
                if not b:
                    raise ContractError("empty block")
                if seen & set(b) or len(set(b)) != len(b):
                    raise ContractError("blocks must be disjoint")
                seen |= set(b)
                norm.append(b)
            object.__setattr__(self, "blocks", tuple(norm))

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]]) -> "ProjectionMode":
        return cls("blocks", tuple(tuple(b) for b in blocks))

    def validate(self, d: int) -> None:
        for b in self.blocks:
            if min(b) < 0 or max(b) >= d:
                raise ContractError(f"block {list(b)} has an index outside 0..{d - 1}")


UNRESTRICTED = ProjectionMode("unrestricted")
FULL = ProjectionMode("full")


def default_num_proj(d: int) -> int:
    """50 projections up to 6 columns, 100 up to 14, 200 beyond."""
    if d < 1:
        raise ContractError("d must be >= 1")
    if d <= 6:
        return 50
    if d <= 14:
        return 100
    return 200


def _uniform_subsets(rng: np.random.Generator, pool: np.ndarray, sizes: np.ndarray, d: int) -> np.ndarray:
    """Rows of a ``len(sizes) x d`` mask, row k a uniform ``sizes[k]``-subset of ``pool``."""
    keys = rng.random((sizes.size, pool.size))
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    out = np.zeros((sizes.size, d), dtype=bool)
    out[:, pool] = ranks < sizes[:, None]
    return out


def _block_masks(m: np.ndarray, num_proj: int, mode: ProjectionMode, rng: np.random.Generator) -> np.ndarray:
    """r1 whole missing blocks joined with r2 whole observed blocks."""
    d = m.size
    mode.validate(d)
    miss_blocks, obs_blocks = [], []
    for b in mode.blocks:
        bits = m[list(b)]
        if bits.all():
            miss_blocks.append(b)
        elif not bits.any():
            obs_blocks.append(b)
        else:
            raise ContractError(f"block {list(b)} splits the missing and observed parts of pattern {Pattern.of(m.astype(int))}")
    if not miss_blocks or not obs_blocks:
        raise ContractError(
            f"pattern {Pattern.of(m.astype(int))} needs at least one fully missing and one fully observed block"
        )
    n_miss, n_obs = len(miss_blocks), len(obs_blocks)
    r1 = rng.integers(1, n_miss + 1, size=num_proj)
    r2 = rng.integers(1, n_obs + 1, size=num_proj)
    pick_miss = _uniform_subsets(rng, np.arange(n_miss), r1, n_miss)
    pick_obs = _uniform_subsets(rng, np.arange(n_obs), r2, n_obs)
    out = np.zeros((num_proj, d), dtype=bool)
    for blocks, picks in ((miss_blocks, pick_miss), (obs_blocks, pick_obs)):
        for c, b in enumerate(blocks):
            out[np.ix_(picks[:, c], list(b))] = True
    return out


def sample_projection_masks(
    m, num_proj: int, mode: ProjectionMode = UNRESTRICTED, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Boolean ``num_proj x d`` membership matrix of projections for pattern ``m``."""
    m = np.asarray(getattr(m, "array", m), dtype=bool)
    d = m.size
    if not m.any() or m.all():
        raise ContractError("pattern must have at least one missing and one observed index")
    if num_proj < 1:
        raise ContractError("num_proj must be >= 1")
    if mode.kind == "full":
        return np.ones((num_proj, d), dtype=bool)
    if rng is None:
        raise ContractError("a random generator is required")
    if mode.kind == "blocks":
        return _block_masks(m, num_proj, mode, rng)
    miss = np.flatnonzero(m)
    obs = np.flatnonzero(~m)
    r1 = rng.integers(1, miss.size + 1, size=num_proj)
    r2 = rng.integers(1, np.minimum(d - r1, obs.size) + 1)
    return _uniform_subsets(rng, miss, r1, d) | _uniform_subsets(rng, obs, r2, d)


def sample_projections(
    m: Pattern, num_proj: int, mode: ProjectionMode = UNRESTRICTED, seed: int = 0
) -> list[Projection]:
    """Sample ``num_proj`` projections (with replacement) adapted to pattern ``m``."""
    masks = sample_projection_masks(m, num_proj, mode, _rng.rng(seed, _rng.SCORE, 99))
    return [Projection.from_pattern(np.flatnonzero(row), m) for row in masks]


@dataclass(frozen=True)
class ProjectionPlan:
    """Projections per pattern group, in group order."""

    mode: ProjectionMode
    projections: tuple[tuple[Projection, ...], ...]

    def __iter__(self):
        return iter(self.projections)


def plan_projections(
    groups: Sequence[PatternGroup], num_proj: int, mode: ProjectionMode = UNRESTRICTED, seed: int = 0
) -> ProjectionPlan:
    plans = []
    for g, grp in enumerate(groups):
        masks = sample_projection_masks(grp.pattern, num_proj, mode, _rng.rng(seed, _rng.SCORE, 98, g))
        plans.append(tuple(Projection.from_pattern(np.flatnonzero(r), grp.pattern) for r in masks))
    return ProjectionPlan(mode, tuple(plans))
