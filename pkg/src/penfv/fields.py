"""Piecewise-constant fields: cell projection and face trace algebra.

Fields are plain numpy arrays on the cell index space: a scalar field has
shape ``grid.shape``, an ``m``-component field has shape ``(m,) + grid.shape``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import Grid

QUAD_ORDER = 4


def _gauss(q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * x, 0.5 * w  # nodes on [-1/2, 1/2], weights summing to 1


def project_cells(f: Callable[[np.ndarray], np.ndarray], grid: Grid, q: int = QUAD_ORDER) -> np.ndarray:
    """Cell means of ``f`` by tensor Gauss quadrature with ``q`` nodes per axis.

    ``f`` takes points of shape ``(d, ...)``.  The quadrature is accumulated
    as deviations from the value at the cell center, which makes the
    projection reproduce constants and piecewise-constant data bitwise.
    """
    nodes, weights = _gauss(q)
    centers = grid.cell_centers()
    pivot = np.asarray(f(centers), dtype=float)
    acc = np.zeros_like(pivot)
    expand = (-1,) + (1,) * grid.dim
    for combo in itertools.product(range(q), repeat=grid.dim):
        offs = np.array([nodes[i] for i in combo]).reshape(expand) * grid.h
        w = float(np.prod([weights[i] for i in combo]))
        acc += w * (np.asarray(f(centers + offs), dtype=float) - pivot)
    return pivot + acc


def piecewise_constant(values: np.ndarray, grid: Grid) -> Callable[[np.ndarray], np.ndarray]:
    """Pointwise evaluator of a cell field (for re-projection and tests)."""
    values = np.asarray(values)
    lead = values.ndim - grid.dim

    def fn(x):
        idx = tuple(np.floor(np.asarray(xi) / grid.h).astype(int) % grid.n for xi in x)
        if lead == 0:
            return values[idx]
        return np.stack([values[c][idx] for c in range(values.shape[0])])

    return fn


@dataclass(frozen=True)
class FaceTrace:
    inner: np.ndarray
    outer: np.ndarray

    @property
    def avg(self) -> np.ndarray:
        return 0.5 * (self.inner + self.outer)

    @property
    def jump(self) -> np.ndarray:
        return self.outer - self.inner

    def flipped(self) -> "FaceTrace":
        """Traces seen with the opposite normal orientation."""
        return FaceTrace(self.outer, self.inner)


def outer_values(values: np.ndarray, axis: int, dim: int) -> np.ndarray:
    """Values of the outer cell ``K + e_axis`` at every face of family ``axis``."""
    lead = values.ndim - dim
    return np.roll(values, -1, axis=lead + axis)


def face_traces(values: np.ndarray, axis: int, dim: int | None = None) -> FaceTrace:
    """Inner/outer traces on all faces of one axis family.

    The face stored at index ``K`` separates ``K`` from ``K + e_axis``.
    """
    values = np.asarray(values)
    dim = values.ndim if dim is None else dim
    return FaceTrace(values, outer_values(values, axis, dim))


def normal_velocity(u: np.ndarray, axis: int) -> np.ndarray:
    """``avg(u) . n`` on the faces of family ``axis`` (normals are axis-aligned)."""
    dim = u.shape[0]
    return face_traces(u[axis], axis, dim).avg


def upwind_trace(r: np.ndarray, u: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """``(r_up, r_down)`` on the faces of family ``axis``.

    The inner value is upwind when ``avg(u) . n >= 0``, ties included.
    """
    dim = u.shape[0]
    tr = face_traces(r, axis, dim)
    v = normal_velocity(u, axis)
    forward = v >= 0
    return np.where(forward, tr.inner, tr.outer), np.where(forward, tr.outer, tr.inner)
