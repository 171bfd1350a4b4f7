"""Fluid-domain shapes and the extensions of fluid data onto the whole torus.

A shape is the physical fluid region embedded in the periodic box; everything
outside it is the penalized solid region.  Points are passed as arrays of
shape ``(d, ...)`` so that membership tests vectorize over cells and
quadrature nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

SHAPE_KINDS = ("ball", "ellipsoid", "box", "full", "empty")

# box_relation codes
OUTSIDE = 0
STRADDLES = 1
INSIDE = 2


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class FluidShape:
    kind: str
    center: tuple[float, ...] = ()
    radii: tuple[float, ...] = ()

    @property
    def dim(self) -> int | None:
        return len(self.center) if self.center else None

    @property
    def min_feature_size(self) -> float:
        """Smallest length scale of the boundary.

        Minimal radius of curvature for ellipsoids, smallest half-width for
        boxes; infinite for shapes without a boundary.
        """
        if self.kind in ("full", "empty"):
            return math.inf
        r = np.asarray(self.radii)
        if self.kind == "box":
            return float(r.min())
        return float(r.min() ** 2 / r.max())

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        return c - r, c + r

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Strict interior membership for points ``x`` of shape ``(d, ...)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "full":
            return np.ones(x.shape[1:], dtype=bool)
        if self.kind == "empty":
            return np.zeros(x.shape[1:], dtype=bool)
        c, r = self._cr(x.ndim)
        if self.kind == "box":
            return np.all(np.abs(x - c) < r, axis=0)
        return np.sum(((x - c) / r) ** 2, axis=0) < 1.0

    def box_relation(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Classify closed boxes ``[lo, hi]`` against the shape.

        Returns ``INSIDE`` when the box lies in the open fluid region,
        ``OUTSIDE`` when it misses the closed fluid region, and ``STRADDLES``
        when it meets the boundary.  Exact for every supported kind.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        shape = lo.shape[1:]
        if self.kind == "full":
            return np.full(shape, INSIDE, dtype=np.int8)
        if self.kind == "empty":
            return np.full(shape, OUTSIDE, dtype=np.int8)
        c, r = self._cr(lo.ndim)
        if self.kind == "box":
            inside = np.all((lo > c - r) & (hi < c + r), axis=0)
            outside = np.any((hi < c - r) | (lo > c + r), axis=0)
        else:
            # scale to the unit ball; boxes stay axis-aligned boxes
            a = (lo - c) / r
            b = (hi - c) / r
            nearest = np.clip(0.0, a, b)
            farthest = np.maximum(np.abs(a), np.abs(b))
            dmin = np.sum(nearest**2, axis=0)
            dmax = np.sum(farthest**2, axis=0)
            inside = dmax < 1.0
            outside = dmin > 1.0
        out = np.full(shape, STRADDLES, dtype=np.int8)
        out[inside] = INSIDE
        out[outside] = OUTSIDE
        return out

    def _cr(self, ndim: int) -> tuple[np.ndarray, np.ndarray]:
        extra = (1,) * (ndim - 1)
        c = np.asarray(self.center, dtype=float).reshape((-1,) + extra)
        r = np.asarray(self.radii, dtype=float).reshape((-1,) + extra)
        return c, r

    def to_spec(self) -> dict:
        spec: dict = {"kind": self.kind}
        if self.kind in ("ball", "ellipsoid", "box"):
            spec["center"] = list(self.center)
            if self.kind == "ball":
                spec["radius"] = self.radii[0]
            elif self.kind == "ellipsoid":
                spec["radii"] = list(self.radii)
            else:
                spec["half_widths"] = list(self.radii)
        return spec


def make_shape(spec: Mapping) -> FluidShape:
    """Build a shape from a mapping such as ``{"kind": "ball", "center":
    (0.5, 0.5), "radius": 0.3}``.

    Ellipsoids take ``radii``, boxes take ``half_widths``; ``full`` and
    ``empty`` take no parameters.
    """
    kind = spec.get("kind")
    if kind not in SHAPE_KINDS:
        raise ShapeError(f"unknown shape kind {kind!r}; expected one of {SHAPE_KINDS}")
    if kind in ("full", "empty"):
        return FluidShape(kind)
    center = tuple(float(v) for v in spec.get("center", ()))
    if len(center) not in (2, 3):
        raise ShapeError("shape center must have 2 or 3 coordinates")
    if kind == "ball":
        radii = (float(spec["radius"]),) * len(center)
    elif kind == "ellipsoid":
        radii = tuple(float(v) for v in spec["radii"])
    else:
        radii = tuple(float(v) for v in spec["half_widths"])
    if len(radii) != len(center):
        raise ShapeError("shape radii and center dimensions differ")
    if min(radii) <= 0:
        raise ShapeError("shape radii must be positive")
    return FluidShape(kind, center, radii)


PointFn = Callable[[np.ndarray], np.ndarray]
TimePointFn = Callable[[float, np.ndarray], np.ndarray]


def _as_fn(value, components: int | None = None) -> PointFn:
    if callable(value):
        return value
    c = float(value)

    def const(x):
        shp = x.shape[1:] if components is None else (components,) + x.shape[1:]
        return np.full(shp, c)

    return const


@dataclass(frozen=True)
class ExtendedTriple:
    """Pointwise ``(rho, u, theta)(t, x)`` on the whole torus.

    Fluid-region values come from ``fluid``; the solid region carries
    ``(rho_s, 0, theta_b)``.
    """

    shape: FluidShape
    fluid_rho: TimePointFn
    fluid_u: TimePointFn
    fluid_theta: TimePointFn
    rho_s: PointFn
    theta_b: TimePointFn
    meta: dict = field(default_factory=dict)

    def rho(self, t: float, x: np.ndarray) -> np.ndarray:
        inside = self.shape.contains(x)
        return np.where(inside, self.fluid_rho(t, x), self.rho_s(x))

    def u(self, t: float, x: np.ndarray) -> np.ndarray:
        inside = self.shape.contains(x)
        return np.where(inside, self.fluid_u(t, x), 0.0)

    def theta(self, t: float, x: np.ndarray) -> np.ndarray:
        inside = self.shape.contains(x)
        return np.where(inside, self.fluid_theta(t, x), self.theta_b(t, x))

    def at(self, t: float) -> tuple[PointFn, PointFn, PointFn]:
        return (lambda x: self.rho(t, x), lambda x: self.u(t, x), lambda x: self.theta(t, x))


def _check_positive(fn, x: np.ndarray, name: str) -> None:
    v = np.asarray(fn(x))
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise ShapeError(f"{name} must be positive and finite")


def _probe_points(shape: FluidShape, dim: int, n: int = 9) -> np.ndarray:
    if shape.kind in ("ball", "ellipsoid", "box"):
        lo, hi = shape.bounding_box()
    else:
        lo, hi = np.zeros(dim), np.ones(dim)
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"))


def extend_initial_data(
    fluid_data: Sequence,
    rho_s,
    theta_b,
    shape: FluidShape,
    dim: int | None = None,
) -> ExtendedTriple:
    """Extend initial fluid data ``(rho0, u0, theta0)`` by ``(rho_s, 0, theta_b)``.

    Each entry may be a callable of ``x`` or a constant.  ``theta_b`` may
    also be a callable of ``(t, x)`` when passed via :func:`extend_reference`.
    """
    dim = dim or shape.dim or 2
    rho0, u0, theta0 = fluid_data
    rho0, theta0, rho_s_fn = _as_fn(rho0), _as_fn(theta0), _as_fn(rho_s)
    u0 = _as_fn(u0, dim)
    tb = _as_fn(theta_b)
    probe = _probe_points(shape, dim)
    for fn, name in ((rho0, "rho0"), (theta0, "theta0"), (rho_s_fn, "rho_s"), (tb, "theta_b")):
        _check_positive(fn, probe, name)
    return ExtendedTriple(
        shape,
        lambda t, x: rho0(x),
        lambda t, x: u0(x),
        lambda t, x: theta0(x),
        rho_s_fn,
        lambda t, x: tb(x),
        {"dim": dim},
    )


def extend_reference(
    fluid_reference: Sequence[TimePointFn],
    rho_s,
    theta_b,
    shape: FluidShape,
    dim: int | None = None,
) -> ExtendedTriple:
    """Time-parameterized extension of a fluid-region reference solution.

    ``fluid_reference`` holds callables ``f(t, x)``.  ``theta_b`` may be a
    constant, ``f(x)`` or, with ``time_dependent`` callables, ``f(t, x)``;
    a one-argument callable is treated as time independent.
    """
    dim = dim or shape.dim or 2
    rho, u, theta = fluid_reference
    rho_s_fn = _as_fn(rho_s)
    if callable(theta_b):
        try:
            theta_b(0.0, np.zeros((dim, 1)))
            tb = theta_b
        except TypeError:
            tb = lambda t, x, f=theta_b: f(x)  # noqa: E731
    else:
        tb0 = _as_fn(theta_b)
        tb = lambda t, x: tb0(x)  # noqa: E731
    probe = _probe_points(shape, dim)
    _check_positive(lambda x: rho(0.0, x), probe, "reference rho")
    _check_positive(lambda x: theta(0.0, x), probe, "reference theta")
    _check_positive(rho_s_fn, probe, "rho_s")
    return ExtendedTriple(shape, rho, u, theta, rho_s_fn, tb, {"dim": dim})
