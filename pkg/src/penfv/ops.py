"""Discrete differential operators on the periodic mesh.

Matrix-free kernels act on cell arrays; the sparse-matrix versions act on
C-order flattened cell vectors and are used for Newton Jacobians.  All
reductions go through ``np.sum`` on arrays of fixed layout, so they are
bit-reproducible.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Grid


def _lead(a: np.ndarray, grid: Grid) -> int:
    return a.ndim - grid.dim


def shift(a: np.ndarray, grid: Grid, axis: int, step: int) -> np.ndarray:
    """Values at ``K + step * e_axis``."""
    return np.roll(a, -step, axis=_lead(a, grid) + axis)


def grad_h(r: np.ndarray, grid: Grid) -> np.ndarray:
    """Cell gradient from face averages: central differences, shape ``(d, ...)``."""
    h2 = 2.0 * grid.h
    return np.stack([(shift(r, grid, i, 1) - shift(r, grid, i, -1)) / h2 for i in range(grid.dim)])


def div_h(v: np.ndarray, grid: Grid) -> np.ndarray:
    h2 = 2.0 * grid.h
    out = np.zeros(grid.shape)
    for i in range(grid.dim):
        out += (shift(v[i], grid, i, 1) - shift(v[i], grid, i, -1)) / h2
    return out


def grad_tensor(v: np.ndarray, grid: Grid) -> np.ndarray:
    """``(grad_h v)[i, j] = d_j v_i``, shape ``(d, d, ...)``."""
    return np.stack([grad_h(v[i], grid) for i in range(grid.dim)])


def sym_grad_h(v: np.ndarray, grid: Grid) -> np.ndarray:
    g = grad_tensor(v, grid)
    return 0.5 * (g + np.swapaxes(g, 0, 1))


def grad_dual(r: np.ndarray, grid: Grid) -> np.ndarray:
    """Dual gradient ``jump(r)/h`` per face; entry ``[i, K]`` is the face between
    ``K`` and ``K + e_i`` and points along ``e_i``."""
    return np.stack([(shift(r, grid, i, 1) - r) / grid.h for i in range(grid.dim)])


def laplace_h(r: np.ndarray, grid: Grid) -> np.ndarray:
    h2 = grid.h**2
    out = np.zeros(grid.shape)
    for i in range(grid.dim):
        out += (shift(r, grid, i, 1) - 2.0 * r + shift(r, grid, i, -1)) / h2
    return out


def div_faces(w: np.ndarray, grid: Grid) -> np.ndarray:
    """Divergence of face-normal data: ``(w_{K+} - w_{K-})/h`` per axis."""
    out = np.zeros(grid.shape)
    for i in range(grid.dim):
        out += (w[i] - shift(w[i], grid, i, -1)) / grid.h
    return out


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Integral of a piecewise-constant cell function."""
    return float(np.sum(f) * grid.cell_volume)


def integrate_dual(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """``int a . b`` for two dual-cell fields parallel to the face normals."""
    return float(np.sum(a * b) * grid.dual_volume)


def integrate_faces(f: np.ndarray, grid: Grid) -> float:
    """``sum_sigma |sigma| f_sigma`` over all faces."""
    return float(np.sum(f) * grid.face_area)


# --- sparse matrices -------------------------------------------------------


@lru_cache(maxsize=32)
def shift_matrix(grid: Grid, axis: int, step: int) -> sp.csr_matrix:
    """Permutation ``P`` with ``(P r)_K = r_{K + step e_axis}``."""
    idx = np.arange(grid.ncells).reshape(grid.shape)
    cols = np.roll(idx, -step, axis=axis).ravel()
    return sp.csr_matrix((np.ones(grid.ncells), (np.arange(grid.ncells), cols)), shape=(grid.ncells,) * 2)


@lru_cache(maxsize=32)
def grad_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    return ((shift_matrix(grid, axis, 1) - shift_matrix(grid, axis, -1)) / (2.0 * grid.h)).tocsr()


@lru_cache(maxsize=32)
def jump_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    """Cell vector to face vector of family ``axis``: ``r_{K+e} - r_K``."""
    return (shift_matrix(grid, axis, 1) - sp.identity(grid.ncells, format="csr")).tocsr()


@lru_cache(maxsize=32)
def avg_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    return (0.5 * (shift_matrix(grid, axis, 1) + sp.identity(grid.ncells, format="csr"))).tocsr()


@lru_cache(maxsize=8)
def laplace_matrix(grid: Grid) -> sp.csr_matrix:
    m = sp.csr_matrix((grid.ncells, grid.ncells))
    for i in range(grid.dim):
        m = m + shift_matrix(grid, i, 1) + shift_matrix(grid, i, -1)
    m = m - 2 * grid.dim * sp.identity(grid.ncells, format="csr")
    return (m / grid.h**2).tocsr()


def sym_grad_matrices(grid: Grid) -> dict[tuple[int, int, int], sp.csr_matrix]:
    """``M[(i, j, k)]`` maps velocity component ``k`` to ``(D_h v)_{ij}``."""
    out = {}
    for i in range(grid.dim):
        for j in range(grid.dim):
            for k in range(grid.dim):
                m = sp.csr_matrix((grid.ncells, grid.ncells))
                if k == i:
                    m = m + 0.5 * grad_matrix(grid, j)
                if k == j:
                    m = m + 0.5 * grad_matrix(grid, i)
                out[(i, j, k)] = m.tocsr()
    return out


# --- integration by parts --------------------------------------------------

_QUAD = 10


def _nodes(q: int = _QUAD):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1.0), 0.5 * w


def cell_means(f, grid: Grid, q: int = _QUAD) -> np.ndarray:
    """Cell means of ``f(x)`` by tensor Gauss quadrature (no pivoting)."""
    x, w = _nodes(q)
    lo = grid.cell_bounds()[0]
    out = np.zeros(grid.shape)
    for idx in np.ndindex(*(q,) * grid.dim):
        offs = np.array([x[k] for k in idx]).reshape((-1,) + (1,) * grid.dim) * grid.h
        out += np.prod([w[k] for k in idx]) * f(lo + offs)
    return out


def face_means(f, grid: Grid, axis: int, q: int = _QUAD) -> np.ndarray:
    """Means of ``f`` over the faces of family ``axis`` (stored at the inner cell)."""
    x, w = _nodes(q)
    lo = grid.cell_bounds()[0]
    out = np.zeros(grid.shape)
    others = [k for k in range(grid.dim) if k != axis]
    for idx in np.ndindex(*(q,) * len(others)):
        offs = np.zeros(grid.dim)
        offs[axis] = 1.0
        for k, j in zip(others, idx):
            offs[k] = x[j]
        pts = lo + offs.reshape((-1,) + (1,) * grid.dim) * grid.h
        out += np.prod([w[j] for j in idx]) * f(pts)
    return out


def _trig_field(grid: Grid, rng: np.random.Generator, modes: int = 2):
    """Random smooth periodic vector field and its exact divergence."""
    d, L = grid.dim, grid.L
    ks = rng.integers(-modes, modes + 1, size=(d, 3, d))
    amp = rng.standard_normal((d, 3))
    ph = rng.uniform(0, 2 * np.pi, (d, 3))

    def arg(i, m, x):
        k = ks[i, m].reshape((-1,) + (1,) * (x.ndim - 1))
        return 2 * np.pi * np.sum(k * x, axis=0) / L + ph[i, m]

    def phi(x):
        return np.stack([sum(amp[i, m] * np.sin(arg(i, m, x)) for m in range(3)) for i in range(d)])

    def div(x):
        return sum(amp[i, m] * np.cos(arg(i, m, x)) * 2 * np.pi * ks[i, m, i] / L
                   for i in range(d) for m in range(3))

    return phi, div



def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, np.finfo(float).tiny)


def check_ibp_identities(grid: Grid, seed: int = 0, tol: float = 1e-12) -> dict:
    """Evaluate the discrete integration-by-parts identities on random fields.

    Returns a report with one relative residual per identity, the maximum,
    and ``ok``.  Each residual is normalized by the L1 size of the integrands
    involved.
    """
    rng = np.random.default_rng(seed)
    r = rng.standard_normal(grid.shape)
    f = rng.standard_normal(grid.shape)
    v = rng.standard_normal((grid.dim,) + grid.shape)
    w = rng.standard_normal((grid.dim,) + grid.shape)
    vol = grid.cell_volume

    res = {}
    lhs = integrate(r * div_h(v, grid), grid)
    gr = grad_h(r, grid)
    rhs = -integrate(np.sum(gr * v, axis=0), grid)
    scale = vol * (np.sum(np.abs(r * div_h(v, grid))) + np.sum(np.abs(gr * v)))
    res["div_grad"] = _rel(lhs, rhs, scale)

    lap_r = laplace_h(r, grid)
    ge_r, ge_f = grad_dual(r, grid), grad_dual(f, grid)
    a = integrate(lap_r * f, grid)
    b = -integrate_dual(ge_r, ge_f, grid)
    c = integrate(r * laplace_h(f, grid), grid)
    scale = vol * (np.sum(np.abs(lap_r * f)) + np.sum(np.abs(ge_r * ge_f)) + np.sum(np.abs(r * laplace_h(f, grid))))
    res["laplace_dual"] = _rel(a, b, scale)
    res["laplace_symmetric"] = _rel(a, c, scale)

    # continuous field: cell integral of div Phi against face means of Phi
    phi, div_phi = _trig_field(grid, rng)
    w_phi = np.stack([face_means(lambda x, i=i: phi(x)[i], grid, i) for i in range(grid.dim)])
    vol_div = cell_means(div_phi, grid)
    a = integrate(r * vol_div, grid)
    b = integrate(r * div_faces(w_phi, grid), grid)
    scale = vol * (np.sum(np.abs(r * vol_div)) + np.sum(np.abs(r * div_faces(w_phi, grid))))
    res["div_projection"] = _rel(a, b, scale)

    # face-normal data standing in for a face-projected vector field
    a = integrate(r * div_faces(w, grid), grid)
    b = -integrate_dual(ge_r, w, grid)
    scale = vol * (np.sum(np.abs(r * div_faces(w, grid))) + np.sum(np.abs(ge_r * w)))
    res["div_faces_dual"] = _rel(a, b, scale)

    dv = div_h(v, grid)
    tr = np.trace(grad_tensor(v, grid))
    trs = np.trace(sym_grad_h(v, grid))
    scale = float(np.max(np.abs(dv))) or 1.0
    res["div_trace_grad"] = float(np.max(np.abs(dv - tr))) / scale
    res["div_trace_symgrad"] = float(np.max(np.abs(dv - trs))) / scale

    worst = max(res.values())
    return {"residuals": res, "max_residual": worst, "tol": tol, "ok": worst <= tol}
