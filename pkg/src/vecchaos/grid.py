"""Symmetric boxes and regular systems of cells.

A regular system is a partition of a box ``[-T_1, T_1) x ... x [-T_nu, T_nu)``
into congruent half-open cells that is closed under negation.  Cells carry
signed indices ``k = +-1, ..., +-N`` with ``cell(-k) == -cell(k)``.

Internally every per-cell array uses *positions* ``0 .. 2N-1``: position
``p < N`` holds ``k = p + 1`` and position ``N + p`` holds ``k = -(p + 1)``.
Negation is therefore the position shift ``p -> (p + N) mod 2N``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import SymmetryViolation, VecChaosError


def _as_tuple(value, dim: int, name: str) -> tuple:
    arr = np.atleast_1d(np.asarray(value))
    if arr.size == 1:
        arr = np.repeat(arr, dim)
    if arr.shape != (dim,):
        raise VecChaosError(f"{name} must have {dim} entries, got {arr.shape}")
    return tuple(arr.tolist())


@dataclass(frozen=True)
class Box:
    """Origin-symmetric box ``prod_l [-half_extent[l], half_extent[l])``."""

    half_extent: tuple[float, ...]

    def __post_init__(self):
        he = tuple(float(h) for h in self.half_extent)
        if len(he) < 1:
            raise VecChaosError("box dimension must be >= 1")
        if not all(np.isfinite(h) and h > 0 for h in he):
            raise VecChaosError(f"half extents must be positive, got {he}")
        object.__setattr__(self, "half_extent", he)

    @property
    def dim(self) -> int:
        return len(self.half_extent)

    @property
    def volume(self) -> float:
        return float(np.prod([2.0 * h for h in self.half_extent]))

    def scaled(self, factor: float) -> "Box":
        return Box(tuple(factor * h for h in self.half_extent))


class Cell(NamedTuple):
    signed_index: int
    lower: np.ndarray
    upper: np.ndarray


class RegularSystem:
    """Uniform symmetric grid on a :class:`Box`.

    Immutable; build with :func:`build_symmetric_grid`.
    """

    def __init__(self, box: Box, cells_per_axis: Sequence[int]):
        cpa = tuple(int(c) for c in cells_per_axis)
        if len(cpa) != box.dim:
            raise VecChaosError("cells_per_axis must match the box dimension")
        if any(c <= 0 for c in cpa):
            raise VecChaosError(f"cells_per_axis must be positive, got {cpa}")
        if any(c % 2 for c in cpa):
            raise SymmetryViolation(
                f"cells_per_axis must be even on every axis to be closed under negation, got {cpa}"
            )
        self.box = box
        self.cells_per_axis = cpa

        counts = np.array(cpa)
        half = counts // 2
        # positive cells: first coordinate in the upper half, ordered
        # lexicographically with positive half-axes first
        pos = []
        for idx in itertools.product(*(range(c) for c in cpa)):
            if idx[0] >= half[0]:
                key = tuple((i - h) % c for i, h, c in zip(idx, half, cpa))
                pos.append((key, idx))
        pos.sort()
        plus = np.array([idx for _, idx in pos], dtype=np.int64).reshape(-1, box.dim)
        minus = counts - 1 - plus
        self._multi = np.concatenate([plus, minus], axis=0)
        self._multi.setflags(write=False)

    # -- sizes and index bookkeeping ------------------------------------
    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def n_pairs(self) -> int:
        """N, the number of cells with positive index."""
        return self._multi.shape[0] // 2

    @property
    def n_cells(self) -> int:
        return self._multi.shape[0]

    @property
    def multi_index(self) -> np.ndarray:
        """Integer grid coordinates of every cell, shape ``(2N, dim)``."""
        return self._multi

    @cached_property
    def signed_index(self) -> np.ndarray:
        n = self.n_pairs
        out = np.concatenate([np.arange(1, n + 1), -np.arange(1, n + 1)])
        out.setflags(write=False)
        return out

    @cached_property
    def negation(self) -> np.ndarray:
        """Position permutation implementing ``k -> -k``."""
        out = (np.arange(self.n_cells) + self.n_pairs) % self.n_cells
        out.setflags(write=False)
        return out

    @cached_property
    def pair_id(self) -> np.ndarray:
        """Position -> ``|k| - 1``; two cells collide in a kernel iff their pair ids agree."""
        out = np.arange(self.n_cells) % self.n_pairs
        out.setflags(write=False)
        return out

    def position(self, k: int) -> int:
        n = self.n_pairs
        if k == 0 or abs(k) > n:
            raise VecChaosError(f"signed index {k} out of range +-1..+-{n}")
        return k - 1 if k > 0 else n + (-k) - 1

    # -- geometry ---------------------------------------------------------
    def _corner(self, idx: np.ndarray) -> np.ndarray:
        # h * (2i - c) / c is sign-symmetric, so negated cells get exactly negated corners
        he = np.array(self.box.half_extent)
        c = np.array(self.cells_per_axis)
        return he * (2 * idx - c) / c

    @cached_property
    def lower(self) -> np.ndarray:
        out = self._corner(self._multi)
        out.setflags(write=False)
        return out

    @cached_property
    def upper(self) -> np.ndarray:
        out = self._corner(self._multi + 1)
        out.setflags(write=False)
        return out

    @cached_property
    def representatives(self) -> np.ndarray:
        """Cell midpoints ``u_k``, shape ``(2N, dim)``; ``u_{-k} == -u_k`` exactly."""
        he = np.array(self.box.half_extent)
        c = np.array(self.cells_per_axis)
        out = he * (2 * self._multi + 1 - c) / c
        out.setflags(write=False)
        return out

    @property
    def cell_widths(self) -> np.ndarray:
        return 2.0 * np.array(self.box.half_extent) / np.array(self.cells_per_axis)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_widths))

    def cell(self, k: int) -> Cell:
        p = self.position(k)
        return Cell(int(k), self.lower[p].copy(), self.upper[p].copy())

    def cells(self) -> list[Cell]:
        return [self.cell(int(k)) for k in self.signed_index]

    # -- comparisons / serialization -------------------------------------
    def __eq__(self, other) -> bool:
        if not isinstance(other, RegularSystem):
            return NotImplemented
        return self.box == other.box and self.cells_per_axis == other.cells_per_axis

    def __hash__(self):
        return hash((self.box, self.cells_per_axis))

    def __repr__(self) -> str:
        return f"RegularSystem(half_extent={self.box.half_extent}, cells_per_axis={self.cells_per_axis})"

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "half_extent": list(self.box.half_extent),
            "cells_per_axis": list(self.cells_per_axis),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegularSystem":
        return build_symmetric_grid(data["dim"], data["half_extent"], data["cells_per_axis"])


def build_symmetric_grid(dim: int, half_extent, cells_per_axis) -> RegularSystem:
    """Uniform regular system with midpoint representatives.

    >>> g = build_symmetric_grid(1, np.pi, 2)
    >>> g.cell(1).lower, g.cell(1).upper
    (array([0.]), array([3.14159265]))
    """
    dim = int(dim)
    if dim < 1:
        raise VecChaosError("dim must be >= 1")
    he = _as_tuple(half_extent, dim, "half_extent")
    cpa = _as_tuple(cells_per_axis, dim, "cells_per_axis")
    if any(float(c) != int(c) for c in cpa):
        raise VecChaosError(f"cells_per_axis must be integers, got {cpa}")
    return RegularSystem(Box(he), [int(c) for c in cpa])


def unit_torus(dim: int, cells_per_axis) -> RegularSystem:
    return build_symmetric_grid(dim, np.pi, cells_per_axis)


def refine(system: RegularSystem, factor: int) -> RegularSystem:
    """Split each cell into ``factor**dim`` congruent subcells."""
    if int(factor) != factor or factor < 1:
        raise VecChaosError(f"refinement factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return system
    return RegularSystem(system.box, [c * factor for c in system.cells_per_axis])


def parent_positions(fine: RegularSystem, coarse: RegularSystem) -> np.ndarray:
    """For every cell of ``fine`` the position of the ``coarse`` cell containing it."""
    if fine.box != coarse.box:
        raise VecChaosError("systems live on different boxes")
    ratio = np.array(fine.cells_per_axis) // np.array(coarse.cells_per_axis)
    if np.any(ratio * np.array(coarse.cells_per_axis) != np.array(fine.cells_per_axis)):
        raise VecChaosError("fine system is not a refinement of coarse")
    lookup = {tuple(m): p for p, m in enumerate(coarse.multi_index.tolist())}
    parents = fine.multi_index // ratio
    return np.array([lookup[tuple(m)] for m in parents.tolist()], dtype=np.int64)


def scale_system(system: RegularSystem, factor: float) -> RegularSystem:
    """Same cell layout on the box dilated by ``factor`` (cell ``A -> factor * A``)."""
    return RegularSystem(system.box.scaled(factor), system.cells_per_axis)


def match_positions(small: RegularSystem, large: RegularSystem, atol: float = 1e-9) -> np.ndarray:
    """Positions in ``large`` of the cells of ``small`` when both share a cell width.

    Used to couple samples drawn on nested boxes.
    """
    if not np.allclose(small.cell_widths, large.cell_widths, rtol=0, atol=atol):
        raise VecChaosError("systems have different cell widths")
    shift = (np.array(large.cells_per_axis) - np.array(small.cells_per_axis)) // 2
    lookup = {tuple(m): p for p, m in enumerate(large.multi_index.tolist())}
    return np.array([lookup[tuple(m)] for m in (small.multi_index + shift).tolist()], dtype=np.int64)
