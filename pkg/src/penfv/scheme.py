"""Implicit finite-volume step for the penalized Navier-Stokes-Fourier system.

Unknowns are cellwise ``(rho, u, theta)``.  The global residual tests the
three balance laws with cell indicators; rows carry the ``|K|`` factor.
Each step is solved by Newton's method with the upwind directions frozen
during the linear solve and a positivity-preserving backtracking.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import ops
from .fields import normal_velocity, project_cells
from .geometry import ExtendedTriple
from .mesh import DomainMask, Grid

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class NoConvergence(SolverError):
    pass


class PositivityLost(SolverError):
    pass


class NonFiniteState(ValueError):
    pass


@dataclass(frozen=True)
class SchemeParams:
    dt: float
    h: float
    eps: float
    alpha: float = 0.0
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    gamma: float = 1.4
    tol_newton: float = 1e-11
    max_newton: int = 30
    damping_floor: float = 2.0**-20

    @property
    def cv(self) -> float:
        return 1.0 / (self.gamma - 1.0)

    @property
    def visc_coeff(self) -> float:
        """Artificial diffusion coefficient ``h**alpha`` of the flux."""
        return self.h**self.alpha

    def errors(self) -> list[str]:
        errs = []
        if not self.dt > 0:
            errs.append("Δt must be positive")
        if not self.h > 0:
            errs.append("h must be positive")
        if not self.eps > 0:
            errs.append("ε must be positive")
        if not self.alpha > -1:
            errs.append(f"α = {self.alpha} violates α > −1")
        if not self.mu > 0:
            errs.append("μ must be positive")
        if not self.lam >= 0:
            errs.append("λ must be non-negative")
        if not self.kappa > 0:
            errs.append("κ must be positive")
        if not self.gamma > 1:
            errs.append("γ must exceed 1")
        if not self.tol_newton > 0:
            errs.append("tol_newton must be positive")
        if self.max_newton < 1:
            errs.append("max_newton must be at least 1")
        if not 0 < self.damping_floor < 1:
            errs.append("damping_floor must lie in (0, 1)")
        return errs

    def validate(self) -> "SchemeParams":
        errs = self.errors()
        if errs:
            raise ValueError("; ".join(errs))
        return self


@dataclass
class State:
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    t: float = 0.0
    step: int = 0

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def copy(self) -> "State":
        return State(self.rho.copy(), self.u.copy(), self.theta.copy(), self.t, self.step)

    def check(self) -> "State":
        for name in ("rho", "u", "theta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteState(f"{name} has non-finite values")
        if np.any(self.rho <= 0):
            raise PositivityLost(f"density not positive (min {self.rho.min():.3e})")
        if np.any(self.theta <= 0):
            raise PositivityLost(f"temperature not positive (min {self.theta.min():.3e})")
        return self

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho.ravel(), self.u.reshape(-1), self.theta.ravel()])

    @classmethod
    def unpack(cls, x: np.ndarray, grid: Grid, t: float = 0.0, step: int = 0) -> "State":
        N, d = grid.ncells, grid.dim
        rho = x[:N].reshape(grid.shape)
        u = x[N : N * (d + 1)].reshape((d,) + grid.shape)
        theta = x[N * (d + 1) :].reshape(grid.shape)
        return cls(rho.copy(), u.copy(), theta.copy(), t, step)


@dataclass
class BoundaryData:
    """Projected boundary temperature and solid-region initial density.

    ``theta_b_of_t`` (optional) returns the projected boundary temperature at
    time ``t``; otherwise ``theta_b`` is used at every step.
    """

    theta_b: np.ndarray
    rho_s: np.ndarray
    theta_b_of_t: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        if np.any(self.theta_b <= 0):
            raise ValueError("boundary temperature must be positive")

    def theta_b_at(self, t: float) -> np.ndarray:
        if self.theta_b_of_t is None:
            return self.theta_b
        tb = self.theta_b_of_t(t)
        if np.any(tb <= 0):
            raise ValueError("boundary temperature must be positive")
        return tb


def project_initial(ext: ExtendedTriple, grid: Grid) -> State:
    """Cell projection of the extended initial data."""
    rho, u, theta = ext.at(0.0)
    return State(project_cells(rho, grid), project_cells(u, grid), project_cells(theta, grid)).check()


def project_boundary(ext: ExtendedTriple, grid: Grid, time_dependent: bool = False) -> BoundaryData:
    tb = project_cells(lambda x: ext.theta_b(0.0, x), grid)
    rs = project_cells(ext.rho_s, grid)
    of_t = None
    if time_dependent:
        of_t = lambda t: project_cells(lambda x: ext.theta_b(t, x), grid)  # noqa: E731
    return BoundaryData(tb, rs, of_t)


# --- constitutive relations and flux ----------------------------------------


def eos(rho, theta, cv: float, gamma: float):
    """Perfect gas: pressure, internal energy and entropy ``(p, e, s)``."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if abs(cv * (gamma - 1.0) - 1.0) > 1e-15:
        raise ValueError("c_v must equal 1/(gamma - 1)")
    if np.any(rho <= 0):
        raise PositivityLost("entropy needs positive density")
    if np.any(theta <= 0):
        raise PositivityLost("entropy needs positive temperature")
    p = rho * theta
    e = cv * theta
    s = cv * np.log(theta) - np.log(rho)
    return p, e, s


def pressure_extended(rho, theta):
    """Pressure continued by zero to non-positive temperatures."""
    return rho * np.maximum(theta, 0.0)


def upwind_flux_value(r_in, r_out, vn, alpha: float, h: float):
    """``r_up * vn - h**alpha * (r_out - r_in)`` for face traces."""
    up = np.where(np.asarray(vn) >= 0, r_in, r_out)
    return up * vn - h**alpha * (np.asarray(r_out) - np.asarray(r_in))


def diffusive_upwind_flux(r: np.ndarray, u: np.ndarray, axis: int, alpha: float, h: float,
                          forward: np.ndarray | None = None) -> np.ndarray:
    """Face fluxes of family ``axis`` for the cell quantity ``r``.

    ``forward`` optionally freezes the upwind selection (inner cell upwind
    where true); by default it is ``avg(u).n >= 0``.
    """
    dim = u.shape[0]
    lead = r.ndim - dim
    r_out = np.roll(r, -1, axis=lead + axis)
    vn = normal_velocity(u, axis)
    fwd = vn >= 0 if forward is None else forward
    up = np.where(fwd, r, r_out)
    return up * vn - h**alpha * (r_out - r)


def viscous_stress(u: np.ndarray, grid: Grid, mu: float, lam: float) -> np.ndarray:
    D = ops.sym_grad_h(u, grid)
    div = np.trace(D)
    S = 2.0 * mu * D
    for i in range(grid.dim):
        S[i, i] += lam * div
    return S


def upwind_directions(u: np.ndarray) -> list[np.ndarray]:
    return [normal_velocity(u, i) >= 0 for i in range(u.shape[0])]


# --- residual and Jacobian -------------------------------------------------


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0
    scale: float = 1.0
    direction_changes: int = 0
    min_damping: float = 1.0


class Scheme:
    """Residual, Jacobian and Newton solver for one grid/parameter set."""

    def __init__(self, grid: Grid, params: SchemeParams, mask: DomainMask, threads: int = 1):
        params.validate()
        if abs(params.h - grid.h) > 1e-14 * grid.h:
            raise ValueError("params.h differs from the grid spacing")
        self.grid = grid
        self.params = params
        self.mask = mask
        self.chi = mask.indicator
        self.threads = max(1, int(threads))

    # -- residual --

    def _flux_div(self, F: Sequence[np.ndarray]) -> np.ndarray:
        g = self.grid
        out = np.zeros(F[0].shape)
        lead = F[0].ndim - g.dim
        for i, Fi in enumerate(F):
            out += Fi - np.roll(Fi, 1, axis=lead + i)
        return g.face_area * out

    def residual_fields(self, new: State, old: State, theta_b: np.ndarray,
                        forward: list[np.ndarray] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Continuity, momentum and energy rows as cell arrays."""
        g, P = self.grid, self.params
        rho, u, th = new.rho, new.u, new.theta
        for a in (rho, u, th, old.rho, old.u, old.theta, theta_b):
            if not np.all(np.isfinite(a)):
                raise NonFiniteState("residual inputs must be finite")
        vol, dt, hal = g.cell_volume, P.dt, P.visc_coeff
        if forward is None:
            forward = upwind_directions(u)
        vn = [normal_velocity(u, i) for i in range(g.dim)]
        p = pressure_extended(rho, th)

        def fluxdiv(r):
            lead = r.ndim - g.dim
            F = []
            for i in range(g.dim):
                r_out = np.roll(r, -1, axis=lead + i)
                up = np.where(forward[i], r, r_out)
                F.append(up * vn[i] - hal * (r_out - r))
            return self._flux_div(F)

        D = ops.sym_grad_h(u, g)
        div = np.trace(D)
        S = 2.0 * P.mu * D
        for i in range(g.dim):
            S[i, i] += P.lam * div
        T = S.copy()
        for i in range(g.dim):
            T[i, i] -= p
        grad_u = ops.grad_tensor(u, g)

        def mass():
            return vol * (rho - old.rho) / dt + fluxdiv(rho)

        def momentum():
            m, m_old = rho * u, old.rho * old.u
            out = vol * (m - m_old) / dt + fluxdiv(m) + (vol / P.eps) * self.chi * u
            for j in range(g.dim):
                st = np.zeros(g.shape)
                for i in range(g.dim):
                    st += ops.grad_h(T[j, i], g)[i]
                out[j] -= vol * st
            return out

        def energy():
            work = np.sum(S * grad_u, axis=(0, 1)) - p * div
            return (P.cv * vol * (rho * th - old.rho * old.theta) / dt
                    + P.cv * fluxdiv(rho * th)
                    - P.kappa * vol * ops.laplace_h(th, g)
                    + (vol / P.eps) * self.chi * (th - theta_b)
                    - vol * work)

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futs = [pool.submit(f) for f in (mass, momentum, energy)]
                return tuple(f.result() for f in futs)
        return mass(), momentum(), energy()

    def residual(self, new: State, old: State, theta_b: np.ndarray,
                 forward: list[np.ndarray] | None = None) -> np.ndarray:
        rm, rq, re = self.residual_fields(new, old, theta_b, forward)
        return np.concatenate([rm.ravel(), rq.reshape(-1), re.ravel()])

    def jacobian(self, new: State, old: State, forward: list[np.ndarray] | None = None) -> sp.csr_matrix:
        """Analytic Jacobian of the residual with frozen upwind directions."""
        g, P = self.grid, self.params
        d, N = g.dim, g.ncells
        vol, dt, hal, area = g.cell_volume, P.dt, P.visc_coeff, g.face_area
        rho, u, th = new.rho.ravel(), new.u.reshape(d, -1), new.theta.ravel()
        if forward is None:
            forward = upwind_directions(new.u)
        I = sp.identity(N, format="csr")
        diag = lambda a: sp.diags(np.asarray(a).ravel(), format="csr")  # noqa: E731

        Lsum = sp.csr_matrix((N, N))
        C_parts = []  # (FD_i, U_i, A_i) for convective velocity derivatives
        for i in range(d):
            Pp = ops.shift_matrix(g, i, 1)
            Pm = ops.shift_matrix(g, i, -1)
            w = forward[i].ravel().astype(float)
            U = (diag(w) + diag(1.0 - w) @ Pp).tocsr()
            A = ops.avg_matrix(g, i)
            J = ops.jump_matrix(g, i)
            FD = area * (I - Pm)
            vn = A @ u[i]
            Lsum = Lsum + FD @ (diag(vn) @ U - hal * J)
            C_parts.append((FD, U, A))

        def conv_u(r):
            return [FD @ diag(U @ r) @ A for FD, U, A in C_parts]

        G = [ops.grad_matrix(g, i) for i in range(d)]
        M = ops.sym_grad_matrices(g)
        thp = np.maximum(th, 0.0)
        pos = (th > 0).astype(float)
        p = rho * thp
        Dm = {(i, j): sum(M[(i, j, k)] @ u[k] for k in range(d)) for i in range(d) for j in range(d)}
        div = sum(G[k] @ u[k] for k in range(d))
        chi = diag(self.chi)

        blocks = [[None] * (d + 2) for _ in range(d + 2)]
        # continuity
        blocks[0][0] = vol / dt * I + Lsum
        cu = conv_u(rho)
        for k in range(d):
            blocks[0][1 + k] = cu[k]
        # momentum
        dp_drho, dp_dth = diag(thp), diag(rho * pos)
        for j in range(d):
            cu = conv_u(rho * u[j])
            blocks[1 + j][0] = (vol / dt * I + Lsum) @ diag(u[j]) + vol * G[j] @ dp_drho
            for k in range(d):
                b = cu[k]
                visc = sp.csr_matrix((N, N))
                for i in range(d):
                    visc = visc + 2.0 * P.mu * G[i] @ M[(j, i, k)]
                visc = visc + P.lam * G[j] @ G[k]
                b = b - vol * visc
                if k == j:
                    b = b + (vol / dt * I + Lsum) @ diag(rho) + (vol / P.eps) * chi
                blocks[1 + j][1 + k] = b
            blocks[1 + j][d + 1] = vol * G[j] @ dp_dth
        # energy
        cv = P.cv
        blocks[d + 1][0] = cv * (vol / dt * I + Lsum) @ diag(th) + vol * diag(div) @ dp_drho
        cu = conv_u(rho * th)
        for k in range(d):
            dwork = sp.csr_matrix((N, N))
            for j in range(d):
                dwork = dwork + 4.0 * P.mu * diag(Dm[(k, j)]) @ G[j]
            dwork = dwork + 2.0 * P.lam * diag(div) @ G[k] - diag(p) @ G[k]
            blocks[d + 1][1 + k] = cv * cu[k] - vol * dwork
        blocks[d + 1][d + 1] = (cv * (vol / dt * I + Lsum) @ diag(rho)
                                - P.kappa * vol * ops.laplace_matrix(g)
                                + (vol / P.eps) * chi
                                + vol * diag(div) @ dp_dth)
        return sp.bmat(blocks, format="csc")

    # -- Newton --

    def _scale(self, old: State) -> float:
        big = max(float(np.max(np.abs(a))) for a in (old.rho, old.u, old.theta))
        return max(1.0, big)

    def residual_norm(self, R: np.ndarray) -> float:
        """Max-norm of the residual expressed per unit volume and time step."""
        return float(np.max(np.abs(R))) * self.params.dt / self.grid.cell_volume if R.size else 0.0

    def advance(self, old: State, bdata: BoundaryData) -> tuple[State, SolveStats]:
        g, P = self.grid, self.params
        old.check()
        t_new = old.t + P.dt
        tb = bdata.theta_b_at(t_new)
        scale = self._scale(old)
        stats = SolveStats(scale=scale)
        cur = State(old.rho.copy(), old.u.copy(), old.theta.copy(), t_new, old.step + 1)
        prev_dirs = None
        small_count = 0
        for it in range(1, P.max_newton + 1):
            dirs = upwind_directions(cur.u)
            R = self.residual(cur, old, tb, dirs)
            rn = self.residual_norm(R)
            stats.iterations, stats.residual = it, rn
            changed = prev_dirs is not None and any(np.any(a != b) for a, b in zip(dirs, prev_dirs))
            if changed:
                stats.direction_changes += 1
            if rn <= P.tol_newton * scale:
                small_count += 1
                if not changed or small_count >= 2:
                    return cur.check(), stats
            if it == P.max_newton:
                break
            dx = solve_linear(self.jacobian(cur, old, dirs), -R)
            x = cur.pack()
            lam = 1.0
            N, d = g.ncells, g.dim
            while True:
                trial = x + lam * dx
                if np.all(trial[:N] > 0) and np.all(trial[N * (d + 1):] > 0):
                    break
                lam *= 0.5
                if lam < P.damping_floor:
                    raise PositivityLost(f"damping reached {lam:.2e} at step {old.step + 1}")
            stats.min_damping = min(stats.min_damping, lam)
            cur = State.unpack(trial, g, t_new, old.step + 1)
            prev_dirs = dirs
        raise NoConvergence(
            f"Newton did not converge in {P.max_newton} iterations (residual {stats.residual:.3e}, "
            f"target {P.tol_newton * scale:.3e})"
        )


DIRECT_SOLVE_MAX = 2048


def solve_linear(J: sp.spmatrix, b: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Solve ``J x = b``.

    Small systems use sparse LU.  Larger ones use restarted GMRES with a
    diagonal preconditioner, then an incomplete-LU preconditioner, then LU;
    each fallback is taken only when the previous method misses ``rtol``.
    """
    J = sp.csc_matrix(J)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)

    def ok(x):
        return x is not None and np.all(np.isfinite(x)) and np.linalg.norm(J @ x - b) <= 10 * rtol * bnorm

    x = None
    if J.shape[0] > DIRECT_SOLVE_MAX:
        diag = J.diagonal()
        if np.all(diag != 0):
            M = spla.LinearOperator(J.shape, lambda v: v / diag)
            x, _ = spla.gmres(J, b, M=M, rtol=rtol, atol=0.0, restart=100, maxiter=20)
        if not ok(x):
            log.debug("diagonal-preconditioned GMRES failed; trying ILU")
            try:
                ilu = spla.spilu(J, drop_tol=1e-5, fill_factor=10)
                M = spla.LinearOperator(J.shape, ilu.solve)
                x, _ = spla.gmres(J, b, M=M, rtol=rtol, atol=0.0, restart=100, maxiter=20)
            except RuntimeError:
                x = None
    if not ok(x):
        try:
            x = spla.splu(J, permc_spec="MMD_AT_PLUS_A").solve(b)
        except RuntimeError as exc:  # singular factorization
            raise NoConvergence(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise NoConvergence("linear solve produced non-finite update")
    return x


def assemble_residual(new: State, old: State, params: SchemeParams, mask: DomainMask,
                      bdata: BoundaryData) -> np.ndarray:
    """Global residual vector ``((d + 2) * cells,)`` in the order rho, u_1..u_d, theta."""
    scheme = Scheme(mask.grid, params, mask)
    return scheme.residual(new, old, bdata.theta_b_at(old.t + params.dt))


def advance_step(old: State, params: SchemeParams, mask: DomainMask, bdata: BoundaryData,
                 scheme: Scheme | None = None) -> tuple[State, SolveStats]:
    scheme = scheme or Scheme(mask.grid, params, mask)
    return scheme.advance(old, bdata)


def finite_difference_jacobian(scheme: Scheme, new: State, old: State, theta_b: np.ndarray,
                               forward: list[np.ndarray] | None = None, rel_step: float = 1e-7) -> np.ndarray:
    """Dense column-by-column central-difference Jacobian (small grids only)."""
    g = scheme.grid
    if forward is None:
        forward = upwind_directions(new.u)
    x0 = new.pack()
    scale = max(1.0, float(np.max(np.abs(x0))))
    cols = []
    for k in range(x0.size):
        step = rel_step * scale
        xp, xm = x0.copy(), x0.copy()
        xp[k] += step
        xm[k] -= step
        rp = scheme.residual(State.unpack(xp, g), old, theta_b, forward)
        rm = scheme.residual(State.unpack(xm, g), old, theta_b, forward)
        cols.append((rp - rm) / (2 * step))
    return np.stack(cols, axis=1)


# --- time loop -------------------------------------------------------------

Hook = Callable[[State, State, SolveStats], object]


@dataclass
class SimulationResult:
    final: State
    reports: list = field(default_factory=list)
    stats: list[SolveStats] = field(default_factory=list)


def step_count(t_end: float, dt: float) -> int:
    n = round(t_end / dt)
    if n < 0 or abs(n * dt - t_end) > 1e-12 * max(1.0, abs(t_end)):
        raise ValueError(f"T_end = {t_end} is not an integer multiple of dt = {dt}")
    return int(n)


def run_simulation(initial: State, params: SchemeParams, mask: DomainMask, bdata: BoundaryData,
                   t_end: float, hooks: Iterable[Hook] = (), scheme: Scheme | None = None,
                   threads: int = 1) -> SimulationResult:
    """March ``t_end / dt`` implicit steps, calling each hook after every step.

    Hook return values that are not ``None`` are collected as reports.
    """
    nsteps = step_count(t_end, params.dt)
    scheme = scheme or Scheme(mask.grid, params, mask, threads=threads)
    hooks = list(hooks)
    result = SimulationResult(initial.check())
    cur = initial
    for _ in range(nsteps):
        new, stats = scheme.advance(cur, bdata)
        result.stats.append(stats)
        for hook in hooks:
            rep = hook(new, cur, stats)
            if rep is not None:
                result.reports.append(rep)
        cur = new
        log.debug("step %d t=%.6g newton=%d res=%.2e", cur.step, cur.t, stats.iterations, stats.residual)
    result.final = cur
    return result


def with_dt(params: SchemeParams, dt: float) -> SchemeParams:
    return replace(params, dt=dt)


def mass(state: State, grid: Grid) -> float:
    return ops.integrate(state.rho, grid)


__all__ = [
    "BoundaryData", "NoConvergence", "NonFiniteState", "PositivityLost", "Scheme", "SchemeParams",
    "SimulationResult", "SolveStats", "State", "advance_step", "assemble_residual", "diffusive_upwind_flux",
    "eos", "finite_difference_jacobian", "mass", "pressure_extended", "project_boundary", "project_initial",
    "run_simulation", "step_count", "upwind_flux_value", "viscous_stress",
]

