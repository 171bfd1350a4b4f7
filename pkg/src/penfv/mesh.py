"""Uniform periodic mesh and the artificial splitting of its cells.

Cells are addressed by multi-indices in C order; periodic wrap is modular
index arithmetic, there is no ghost layer.  A face of axis family ``i`` is
stored at the index of its *inner* cell ``K``; the outer cell is
``K + e_i`` and the unit normal is ``e_i``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import INSIDE, OUTSIDE, STRADDLES, FluidShape


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    L: float = 1.0

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def ncells(self) -> int:
        return self.n**self.dim

    @property
    def nfaces(self) -> int:
        return self.dim * self.ncells

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def face_area(self) -> float:
        return self.h ** (self.dim - 1)

    @property
    def dual_volume(self) -> float:
        return self.h**self.dim

    @cached_property
    def _centers(self) -> np.ndarray:
        x = (np.arange(self.n) + 0.5) * self.h
        c = np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))
        c.flags.writeable = False
        return c

    def cell_centers(self) -> np.ndarray:
        """Cell centers, shape ``(d, n, ..., n)``."""
        return self._centers

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.cell_centers()
        return c - 0.5 * self.h, c + 0.5 * self.h

    def cell_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def flat_index(self, index) -> int:
        idx = tuple(int(i) % self.n for i in index)
        return int(np.ravel_multi_index(idx, self.shape))

    def neighbor(self, index, axis: int, step: int = 1) -> tuple[int, ...]:
        idx = list(index)
        idx[axis] = (idx[axis] + step) % self.n
        return tuple(idx)

    def faces(self):
        """Yield ``(K, L, axis)`` flat-index triples for every face."""
        for axis in range(self.dim):
            for k in range(self.ncells):
                idx = self.cell_index(k)
                yield k, self.flat_index(self.neighbor(idx, axis)), axis

    def cell_faces(self, index) -> list[tuple[int, int]]:
        """Faces of a cell as ``(axis, face_index_flat)``; the face at the
        lower side of axis ``i`` is stored at the lower neighbor."""
        out = []
        for axis in range(self.dim):
            out.append((axis, self.flat_index(index)))
            out.append((axis, self.flat_index(self.neighbor(index, axis, -1))))
        return out


def build_grid(dim: int, n: int, L: float = 1.0) -> Grid:
    if dim not in (2, 3):
        raise MeshError(f"dim must be 2 or 3, got {dim}")
    if int(n) != n or n < 4:
        raise MeshError(f"n must be an integer >= 4, got {n}")
    if not L > 0:
        raise MeshError(f"L must be positive, got {L}")
    return Grid(int(dim), int(n), float(L))


def moore_dilate(mask: np.ndarray, steps: int = 1) -> np.ndarray:
    """Periodic dilation over the corner-sharing neighborhood."""
    out = mask.copy()
    for _ in range(steps):
        cur = out.copy()
        for offs in itertools.product((-1, 0, 1), repeat=mask.ndim):
            if any(offs):
                out |= np.roll(cur, offs, axis=tuple(range(mask.ndim)))
    return out


@dataclass(frozen=True, eq=False)
class DomainMask:
    grid: Grid
    fluid: np.ndarray
    solid: np.ndarray
    strip: np.ndarray
    inner: np.ndarray
    outer: np.ndarray
    strip1: np.ndarray
    strip2: np.ndarray
    exterior: np.ndarray  # cells missing the closed fluid region entirely

    @property
    def indicator(self) -> np.ndarray:
        """Per-cell value of the solid indicator used by the penalty terms."""
        return self.solid.astype(float)

    def counts(self) -> dict[str, int]:
        return {k: int(getattr(self, k).sum()) for k in ("fluid", "solid", "strip", "inner", "outer")}

    def strip_measure(self) -> float:
        return float(self.strip.sum()) * self.grid.cell_volume

    def check(self) -> None:
        """Raise if the partition or inclusion invariants are violated."""
        f, s, c, i, o = self.fluid, self.solid, self.strip, self.inner, self.outer
        if np.any(f & s) or not np.all(f | s):
            raise MeshError("fluid/solid cells do not partition the mesh")
        if np.any(i & c) or np.any(i & o) or np.any(c & o) or not np.all(i | c | o):
            raise MeshError("inner/strip/outer cells do not partition the mesh")
        if np.any(i & ~f) or np.any(o & ~s):
            raise MeshError("inclusion chain violated")


def split_domain(grid: Grid, shape: FluidShape) -> DomainMask:
    """Split the cells into fluid/solid and inner/strip/outer parts.

    A cell is fluid when its ``2^d`` corners and its center all lie strictly
    inside the shape, so cells tangent to the boundary are solid.  The strip
    collects every cell whose corner-sharing neighborhood meets the boundary.
    """
    h = grid.h
    if shape.dim is not None and shape.dim != grid.dim:
        raise MeshError(f"shape dimension {shape.dim} differs from grid dimension {grid.dim}")
    if shape.kind not in ("full", "empty"):
        if shape.min_feature_size < 2 * h:
            raise MeshError(
                f"shape feature size {shape.min_feature_size:g} is below 2h = {2 * h:g}"
            )
        lo, hi = shape.bounding_box()
        if np.any(lo < 2 * h) or np.any(hi > grid.L - 2 * h):
            raise MeshError("shape must keep a clearance of 2h from the torus faces")

    centers = grid.cell_centers()
    fluid = shape.contains(centers)
    for corner in itertools.product((-0.5, 0.5), repeat=grid.dim):
        offs = np.asarray(corner).reshape((-1,) + (1,) * grid.dim) * h
        fluid &= shape.contains(centers + offs)

    lo, hi = grid.cell_bounds()
    relation = shape.box_relation(lo, hi)
    if np.any(fluid & (relation == OUTSIDE)) or np.any(~fluid & (relation == INSIDE)):
        raise MeshError("corner sampling disagrees with the exact box test")
    strip = moore_dilate(relation == STRADDLES)
    solid = ~fluid
    inner = fluid & ~strip
    outer = solid & ~strip

    # strip translated k cells toward the solid region
    strip1 = moore_dilate(strip, 1) & ~moore_dilate(fluid, 1)
    strip2 = moore_dilate(strip, 2) & ~moore_dilate(fluid, 2)

    mask = DomainMask(grid, fluid, solid, strip, inner, outer, strip1, strip2, relation == OUTSIDE)
    mask.check()
    return mask
