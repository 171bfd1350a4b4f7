"""Per-step balance ledgers, bound monitors and the relative energy.

Every ledger evaluates the left and right sides of a discrete balance
identity as exact sums over cells and faces.  Because the identities are
algebraic consequences of the scheme, their residual is at the level of the
Newton tolerance for any accepted step.  Each ledger also returns a
``scale`` (the sum of the magnitudes of its terms) so that residuals can be
judged relative to the size of what cancels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import ops
from .mesh import DomainMask
from .scheme import BoundaryData, PositivityLost, SchemeParams, SolveStats, State

CSV_COLUMNS = (
    "step", "t", "E_total", "P_u", "P_theta", "P_theta_sq", "D_E", "D_E_time", "D_E_visc_alpha",
    "D_E_upwind", "D_s1", "D_s2", "D_s3", "R_s", "R_B1", "R_B2", "res_energy", "res_entropy",
    "res_ballistic", "min_rho", "max_rho", "min_theta", "max_theta", "mass", "newton_iters",
)

IDENTITY_FACTOR = 10.0


# --- helpers ---------------------------------------------------------------


def _outer(a: np.ndarray, axis: int, dim: int) -> np.ndarray:
    return np.roll(a, -1, axis=a.ndim - dim + axis)


def _jump(a, axis, dim):
    return _outer(a, axis, dim) - a


def _avg(a, axis, dim):
    return 0.5 * (_outer(a, axis, dim) + a)


def _vn(u, axis):
    return _avg(u[axis], axis, u.shape[0])


def _updown(a, fwd, axis, dim):
    out = _outer(a, axis, dim)
    return np.where(fwd, a, out), np.where(fwd, out, a)


def _entropy(rho, theta, cv):
    if np.any(rho <= 0) or np.any(theta <= 0):
        raise PositivityLost("entropy needs positive density and temperature")
    return cv * np.log(theta) - np.log(rho)


def bregman_rho_log_rho(a, b):
    """Taylor remainder ``E_B(a|b)`` of ``B(r) = r log r``."""
    return a * np.log(a) - (np.log(b) + 1.0) * (a - b) - b * np.log(b)


def bregman_log(a, b):
    """Taylor remainder ``E(a|b)`` of ``log`` (non-positive)."""
    return np.log(a) - (a - b) / b - np.log(b)


class Renormalization(NamedTuple):
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]

    def remainder(self, a, b):
        return self.f(a) - self.df(b) * (a - b) - self.f(b)


RENORMALIZATIONS = {
    "linear": Renormalization("linear", lambda r: r, lambda r: np.ones_like(r)),
    "square": Renormalization("square", lambda r: r * r, lambda r: 2.0 * r),
    "rho_log_rho": Renormalization("rho_log_rho", lambda r: r * np.log(r), lambda r: np.log(r) + 1.0),
}


@dataclass
class Ledger:
    """Terms of one identity; ``residual`` is left minus right side."""

    name: str
    terms: dict
    residual: float
    scale: float
    tol: float

    @property
    def ok(self) -> bool:
        return abs(self.residual) <= IDENTITY_FACTOR * self.tol * self.scale

    def __getitem__(self, key):
        return self.terms[key]


def _scale(*values) -> float:
    return max(1.0, float(sum(abs(v) for v in values)))


# --- energy ----------------------------------------------------------------


def kinetic_dissipation(new: State, old: State, params: SchemeParams, grid) -> tuple[float, float, float]:
    """The three non-negative parts of the numerical dissipation ``D_E``."""
    d, vol, area, dt = grid.dim, grid.cell_volume, grid.face_area, params.dt
    du = new.u - old.u
    d_time = 0.5 * dt * vol * float(np.sum(old.rho * np.sum(du**2, axis=0))) / dt**2
    d_alpha = 0.0
    d_up = 0.0
    for i in range(d):
        ju2 = np.sum(_jump(new.u, i, d) ** 2, axis=0)
        vn = _vn(new.u, i)
        rup, _ = _updown(new.rho, vn >= 0, i, d)
        d_alpha += float(np.sum(_avg(new.rho, i, d) * ju2))
        d_up += float(np.sum(rup * np.abs(vn) * ju2))
    return d_time, params.visc_coeff * area * d_alpha, 0.5 * area * d_up


def total_energy(state: State, cv: float, grid) -> float:
    return grid.cell_volume * float(
        np.sum(0.5 * state.rho * np.sum(state.u**2, axis=0) + cv * state.rho * state.theta)
    )


def energy_balance(new: State, old: State, params: SchemeParams, mask: DomainMask,
                   bdata: BoundaryData) -> Ledger:
    g = mask.grid
    vol, dt, eps, cv = g.cell_volume, params.dt, params.eps, params.cv
    chi = mask.indicator
    tb = bdata.theta_b_at(new.t)
    e_new, e_old = total_energy(new, cv, g), total_energy(old, cv, g)
    usq = np.sum(new.u**2, axis=0)
    p_u = vol / eps * float(np.sum(chi * usq))
    p_th = vol / eps * float(np.sum(chi * (new.theta - tb)))
    d_time, d_alpha, d_up = kinetic_dissipation(new, old, params, g)
    d_e = d_time + d_alpha + d_up
    res = (e_new - e_old) / dt + p_u + p_th + d_e
    scale = _scale(e_new / dt, e_old / dt, p_u, vol / eps * np.sum(chi * np.abs(new.theta - tb)), d_e)
    terms = dict(E_new=e_new, E_old=e_old, P_u=p_u, P_theta=p_th, D_E=d_e, D_E_time=d_time,
                 D_E_visc_alpha=d_alpha, D_E_upwind=d_up)
    return Ledger("energy", terms, res, scale, params.tol_newton)


# --- entropy ---------------------------------------------------------------


def viscous_production_contraction(new: State, phi: np.ndarray, params: SchemeParams, grid) -> float:
    """``int (phi/theta) S : grad u`` with the full velocity gradient."""
    D = ops.sym_grad_h(new.u, grid)
    div = np.trace(D)
    S = 2.0 * params.mu * D
    for i in range(grid.dim):
        S[i, i] += params.lam * div
    work = np.sum(S * ops.grad_tensor(new.u, grid), axis=(0, 1))
    return grid.cell_volume * float(np.sum(phi / new.theta * work))


def viscous_production_quadratic(new: State, phi: np.ndarray, params: SchemeParams, grid) -> float:
    """Same integral written as ``2 mu |D u|^2 + lambda (div u)^2``."""
    D = ops.sym_grad_h(new.u, grid)
    div = ops.div_h(new.u, grid)
    q = 2.0 * params.mu * np.sum(D**2, axis=(0, 1)) + params.lam * div**2
    return grid.cell_volume * float(np.sum(phi / new.theta * q))


def entropy_dissipation(new: State, old: State, phi: np.ndarray, params: SchemeParams, grid) -> dict:
    """``D_s1, D_s2, D_s3`` and ``R_s`` in Taylor-remainder form."""
    d, vol, area, cv = grid.dim, grid.cell_volume, grid.face_area, params.cv
    rho, th = new.rho, new.theta
    s = _entropy(rho, th, cv)
    _entropy(old.rho, old.theta, cv)
    p = rho * th
    d1 = vol / params.dt * float(np.sum(
        phi * (bregman_rho_log_rho(old.rho, rho) - cv * old.rho * bregman_log(old.theta, th))))
    d2 = d3 = rs = face = 0.0
    for i in range(d):
        vn = _vn(new.u, i)
        fwd = vn >= 0
        rup, rdn = _updown(rho, fwd, i, d)
        tup, tdn = _updown(th, fwd, i, d)
        _, phi_dn = _updown(phi, fwd, i, d)
        d2 += float(np.sum(np.abs(vn) * phi_dn * (bregman_rho_log_rho(rup, rdn) - cv * rup * bregman_log(tup, tdn))))
        jr, jp, js = _jump(rho, i, d), _jump(p, i, d), _jump(s, i, d)
        jinv = _jump(1.0 / th, i, d)
        d3 += float(np.sum(_avg(phi, i, d) * (-js * jr - cv * jinv * jp)))
        grad_rho = _avg(cv + 1.0 - s, i, d)
        grad_p = _avg(-cv / th, i, d)
        rs += float(np.sum(_jump(phi, i, d) * (grad_rho * jr + grad_p * jp)))
        ju2 = np.sum(_jump(new.u, i, d) ** 2, axis=0)
        face += float(np.sum((params.visc_coeff + np.abs(vn)) * (jr**2 + jp**2 + ju2)))
    hal = params.visc_coeff
    return dict(D_s1=d1, D_s2=area * d2, D_s3=hal * area * d3, R_s=hal * area * rs,
                face_dissipation=area * face)


def entropy_balance(new: State, old: State, phi: np.ndarray, params: SchemeParams, mask: DomainMask,
                    bdata: BoundaryData) -> Ledger:
    g = mask.grid
    d, vol, area, h, dt = g.dim, g.cell_volume, g.face_area, g.h, params.dt
    phi = np.broadcast_to(np.asarray(phi, dtype=float), g.shape)
    chi = mask.indicator
    tb = bdata.theta_b_at(new.t)
    cv = params.cv
    rs_new = new.rho * _entropy(new.rho, new.theta, cv)
    rs_old = old.rho * _entropy(old.rho, old.theta, cv)

    time_term = vol * float(np.sum((rs_new - rs_old) / dt * phi))
    flux = heat = 0.0
    flux_abs = heat_abs = 0.0
    for i in range(d):
        vn = _vn(new.u, i)
        up, _ = _updown(rs_new, vn >= 0, i, d)
        f = up * vn * _jump(phi, i, d)
        flux += float(np.sum(f))
        flux_abs += float(np.sum(np.abs(f)))
        q = _jump(new.theta, i, d) * _jump(phi / new.theta, i, d)
        heat += float(np.sum(q))
        heat_abs += float(np.sum(np.abs(q)))
    flux *= area
    heat *= params.kappa * area / h
    pen_int = chi * (new.theta - tb) * phi / new.theta
    pen = vol / params.eps * float(np.sum(pen_int))
    prod = viscous_production_contraction(new, phi, params, g)
    lhs = time_term - flux + pen - prod + heat

    ds = entropy_dissipation(new, old, phi, params, g)
    rhs = ds["D_s1"] + ds["D_s2"] + ds["D_s3"] + ds["R_s"]
    scale = _scale(vol * np.sum(np.abs(rs_new * phi)) / dt, vol * np.sum(np.abs(rs_old * phi)) / dt,
                   area * flux_abs, params.kappa * area / h * heat_abs,
                   vol / params.eps * np.sum(np.abs(pen_int)), prod,
                   ds["D_s1"], ds["D_s2"], ds["D_s3"], ds["R_s"])
    terms = dict(time=time_term, flux=flux, penalty=pen, production=prod, heat=heat, **ds)
    terms["D_s"] = ds["D_s1"] + ds["D_s2"] + ds["D_s3"]
    return Ledger("entropy", terms, lhs - rhs, scale, params.tol_newton)


# --- ballistic energy ------------------------------------------------------


def ballistic_balance(new: State, old: State, phi: np.ndarray, params: SchemeParams, mask: DomainMask,
                      bdata: BoundaryData, phi_old: np.ndarray | None = None) -> Ledger:
    """Ballistic energy identity for the test function ``phi`` (new time)
    and ``phi_old`` (old time, defaults to ``phi``)."""
    g = mask.grid
    d, vol, area, h, dt, eps, cv = g.dim, g.cell_volume, g.face_area, g.h, params.dt, params.eps, params.cv
    phi = np.broadcast_to(np.asarray(phi, dtype=float), g.shape)
    phi_old = phi if phi_old is None else np.broadcast_to(np.asarray(phi_old, dtype=float), g.shape)
    if np.any(phi <= 0) or np.any(phi_old <= 0):
        raise ValueError("ballistic test function must be positive")
    chi = mask.indicator
    tb = bdata.theta_b_at(new.t)
    th = new.theta
    rs_new = new.rho * _entropy(new.rho, th, cv)
    rs_old = old.rho * _entropy(old.rho, old.theta, cv)

    def eb(state, rs, ph):
        return vol * float(np.sum(0.5 * state.rho * np.sum(state.u**2, axis=0)
                                  + cv * state.rho * state.theta - rs * ph))

    e_new, e_old = eb(new, rs_new, phi), eb(old, rs_old, phi_old)
    p_u = vol / eps * float(np.sum(chi * np.sum(new.u**2, axis=0)))
    p_th2 = vol / eps * float(np.sum(chi * (th - tb) ** 2 / th))
    heat_sq = heat_mix = rb2 = 0.0
    abs_sum = 0.0
    for i in range(d):
        jt, jphi = _jump(th, i, d), _jump(phi, i, d)
        t_out = _outer(th, i, d)
        a = _avg(phi, i, d) * jt**2 / (th * t_out)
        b = _avg(1.0 / th, i, d) * jt * jphi
        heat_sq += float(np.sum(a))
        heat_mix += float(np.sum(b))
        vn = _vn(new.u, i)
        jrs = _jump(rs_new, i, d)
        c = 0.5 * np.abs(vn) * jrs * jphi + 0.25 * _jump(new.u[i], i, d) * jrs * jphi
        rb2 += float(np.sum(c))
        abs_sum += float(np.sum(np.abs(a)) + np.sum(np.abs(b))) * params.kappa / h + float(np.sum(np.abs(c)))
    heat_sq *= params.kappa * area / h
    heat_mix *= params.kappa * area / h
    rb2 *= area
    prod = viscous_production_quadratic(new, phi, params, g)
    d_time, d_alpha, d_up = kinetic_dissipation(new, old, params, g)
    d_e = d_time + d_alpha + d_up
    ds = entropy_dissipation(new, old, phi, params, g)
    d_s = ds["D_s1"] + ds["D_s2"] + ds["D_s3"]

    dphi = (phi - phi_old) / dt
    transport = -vol * float(np.sum(rs_new * (dphi + np.sum(new.u * ops.grad_h(phi, g), axis=0))))
    rb1_pen = vol / eps * float(np.sum(chi * (th - tb) * (phi - tb) / th))
    rb1_time = dt * vol * float(np.sum((rs_new - rs_old) / dt * dphi))
    rb1 = rb1_pen + rb1_time

    lhs = (e_new - e_old) / dt + p_u + p_th2 + heat_sq + prod + d_s + d_e
    rhs = transport + heat_mix + rb1 + rb2 - ds["R_s"]
    scale = _scale(e_new / dt, e_old / dt, p_u, p_th2, prod, d_s, d_e, transport, rb1_pen, rb1_time,
                   area * abs_sum, ds["R_s"])
    terms = dict(E_new=e_new, E_old=e_old, P_u=p_u, P_theta_sq=p_th2, heat_sq=heat_sq, heat_mix=heat_mix,
                 production=prod, D_s=d_s, D_E=d_e, transport=transport, R_B1=rb1, R_B1_penalty=rb1_pen,
                 R_B1_time=rb1_time, R_B2=rb2, R_s=ds["R_s"])
    return Ledger("ballistic", terms, lhs - rhs, scale, params.tol_newton)


# --- renormalized continuity -----------------------------------------------


def renormalized_continuity_check(new: State, old: State, B: Renormalization | str, phi: np.ndarray,
                                  params: SchemeParams, grid) -> Ledger:
    if isinstance(B, str):
        B = RENORMALIZATIONS[B]
    d, vol, area, dt = grid.dim, grid.cell_volume, grid.face_area, params.dt
    rho, rho_old = new.rho, old.rho
    if np.any(rho <= 0) or np.any(rho_old <= 0):
        raise PositivityLost("renormalization needs positive density")
    phi = np.broadcast_to(np.asarray(phi, dtype=float), grid.shape)
    b_new, b_old, db = B.f(rho), B.f(rho_old), B.df(rho)
    if not (np.all(np.isfinite(b_new)) and np.all(np.isfinite(b_old)) and np.all(np.isfinite(db))):
        raise ValueError(f"renormalization {B.name} is not defined on the density range")

    time_term = vol * float(np.sum((b_new - b_old) / dt * phi))
    div_term = vol * float(np.sum(phi * (rho * db - b_new) * ops.div_h(new.u, grid)))
    flux = visc = upw = 0.0
    abs_sum = 0.0
    for i in range(d):
        vn = _vn(new.u, i)
        fwd = vn >= 0
        bup, _ = _updown(b_new, fwd, i, d)
        rup, rdn = _updown(rho, fwd, i, d)
        _, phi_dn = _updown(phi, fwd, i, d)
        a = bup * vn * _jump(phi, i, d)
        b = _jump(rho, i, d) * _jump(db * phi, i, d)
        c = np.abs(vn) * phi_dn * B.remainder(rup, rdn)
        flux += float(np.sum(a))
        visc += float(np.sum(b))
        upw += float(np.sum(c))
        abs_sum += float(np.sum(np.abs(a)) + params.visc_coeff * np.sum(np.abs(b)) + np.sum(np.abs(c)))
    flux *= area
    visc *= params.visc_coeff * area
    upw *= area
    time_rem = vol / dt * float(np.sum(phi * B.remainder(rho_old, rho)))
    lhs = time_term - flux + div_term
    rhs = -time_rem - visc - upw
    scale = _scale(vol * np.sum(np.abs(b_new * phi)) / dt, vol * np.sum(np.abs(b_old * phi)) / dt,
                   area * abs_sum, vol * np.sum(np.abs(phi * (rho * db - b_new) * ops.div_h(new.u, grid))),
                   time_rem)
    terms = dict(time=time_term, flux=flux, div=div_term, time_remainder=time_rem, visc=visc, upwind=upw)
    return Ledger(f"renormalized_{B.name}", terms, lhs - rhs, scale, params.tol_newton)


# --- relative energy -------------------------------------------------------


def relative_energy(state: State, ref: State, cv: float, grid) -> tuple[float, float]:
    """Relative energy of ``state`` with respect to ``ref`` and the squared
    L2 distance of ``(rho, u, theta)`` reported alongside it."""
    rho, th, rr, tr = state.rho, state.theta, ref.rho, ref.theta
    for a in (rho, th, rr, tr):
        if np.any(a <= 0):
            raise PositivityLost("relative energy needs positive density and temperature")
    s = cv * np.log(th) - np.log(rho)
    s_ref = cv * np.log(tr) - np.log(rr)
    h_state = rho * (cv * th - tr * s)
    h_ref = rr * (cv * tr - tr * s_ref)
    dh_ref = cv * tr - tr * (s_ref - 1.0)
    dens = 0.5 * rho * np.sum((state.u - ref.u) ** 2, axis=0) + h_state - dh_ref * (rho - rr) - h_ref
    vol = grid.cell_volume
    l2 = vol * float(np.sum((rho - rr) ** 2 + np.sum((state.u - ref.u) ** 2, axis=0) + (th - tr) ** 2))
    return vol * float(np.sum(dens)), l2


# --- bound monitor ---------------------------------------------------------


@dataclass
class BoundsMonitor:
    rho_floor: float = 0.0
    theta_floor: float = 0.0
    rho_min: float = np.inf
    rho_max: float = -np.inf
    theta_min: float = np.inf
    theta_max: float = -np.inf
    p_max: float = 0.0
    u_l2: float = 0.0
    grad_theta_sq: float = 0.0
    sym_grad_sq: float = 0.0
    face_dissipation: float = 0.0
    penalty: float = 0.0
    steps: int = 0
    flags: list = field(default_factory=list)

    def finite(self) -> bool:
        vals = (self.rho_min, self.rho_max, self.theta_min, self.theta_max, self.p_max, self.u_l2,
                self.grad_theta_sq, self.sym_grad_sq, self.face_dissipation, self.penalty)
        return all(np.isfinite(v) for v in vals)


def bounds_monitor(state: State, monitor: BoundsMonitor, params: SchemeParams, mask: DomainMask,
                   bdata: BoundaryData, accumulate: bool = True) -> BoundsMonitor:
    """Update running extrema and, when ``accumulate``, add ``dt`` times the
    current dissipation and penalty integrals.

    Face jumps are taken with the sparse jump operators so that the face
    dissipation is an independent evaluation of the ledger quantity.
    """
    g = mask.grid
    vol, area, h, dt = g.cell_volume, g.face_area, g.h, params.dt
    rho, th, u = state.rho, state.theta, state.u
    m = monitor
    m.rho_min = min(m.rho_min, float(rho.min()))
    m.rho_max = max(m.rho_max, float(rho.max()))
    m.theta_min = min(m.theta_min, float(th.min()))
    m.theta_max = max(m.theta_max, float(th.max()))
    p = rho * th
    m.p_max = max(m.p_max, float(np.abs(p).max()))
    m.u_l2 = float(np.sqrt(vol * np.sum(u**2)))
    if float(rho.min()) < m.rho_floor:
        m.flags.append((state.step, "rho", float(rho.min())))
    if float(th.min()) < m.theta_floor:
        m.flags.append((state.step, "theta", float(th.min())))
    if not accumulate:
        return m
    tb = bdata.theta_b_at(state.t)
    r, pv, tv = rho.ravel(), p.ravel(), th.ravel()
    uv = u.reshape(g.dim, -1)
    face = gts = 0.0
    for i in range(g.dim):
        J = ops.jump_matrix(g, i)
        A = ops.avg_matrix(g, i)
        vn = np.abs(A @ uv[i])
        ju2 = sum((J @ uv[k]) ** 2 for k in range(g.dim))
        face += float(np.sum((params.visc_coeff + vn) * ((J @ r) ** 2 + (J @ pv) ** 2 + ju2)))
        gts += float(np.sum((J @ tv) ** 2))
    m.face_dissipation += dt * area * face
    m.grad_theta_sq += dt * g.dual_volume * gts / h**2
    m.sym_grad_sq += dt * vol * float(np.sum(ops.sym_grad_h(u, g) ** 2))
    chi = mask.indicator
    m.penalty += dt * vol / params.eps * float(np.sum(chi * (np.sum(u**2, axis=0) + (th - tb) ** 2)))
    m.steps += 1
    return m


# --- per-step report -------------------------------------------------------


@dataclass
class BalanceReport:
    step: int
    t: float
    energy: Ledger
    entropy: Ledger
    entropy_unit: Ledger
    ballistic: Ledger
    renormalized: dict
    min_rho: float
    max_rho: float
    min_theta: float
    max_theta: float
    mass: float
    newton_iters: int

    @property
    def ledgers(self) -> list[Ledger]:
        return [self.energy, self.entropy, self.entropy_unit, self.ballistic, *self.renormalized.values()]

    @property
    def ok(self) -> bool:
        signs = (self.energy["D_E_time"] >= 0 and self.energy["D_E_visc_alpha"] >= 0
                 and self.energy["D_E_upwind"] >= 0
                 and all(led[k] >= 0 for led in (self.entropy, self.entropy_unit)
                         for k in ("D_s1", "D_s2", "D_s3")))
        return signs and all(led.ok for led in self.ledgers)

    def failures(self) -> list[str]:
        return [f"{led.name}: residual {led.residual:.3e} (scale {led.scale:.3e})"
                for led in self.ledgers if not led.ok]

    def row(self) -> dict:
        e, s, b = self.energy, self.entropy, self.ballistic
        return {
            "step": self.step, "t": self.t, "E_total": e["E_new"], "P_u": e["P_u"], "P_theta": e["P_theta"],
            "P_theta_sq": b["P_theta_sq"], "D_E": e["D_E"], "D_E_time": e["D_E_time"],
            "D_E_visc_alpha": e["D_E_visc_alpha"], "D_E_upwind": e["D_E_upwind"],
            "D_s1": s["D_s1"], "D_s2": s["D_s2"], "D_s3": s["D_s3"], "R_s": s["R_s"],
            "R_B1": b["R_B1"], "R_B2": b["R_B2"], "res_energy": e.residual, "res_entropy": s.residual,
            "res_ballistic": b.residual, "min_rho": self.min_rho, "max_rho": self.max_rho,
            "min_theta": self.min_theta, "max_theta": self.max_theta, "mass": self.mass,
            "newton_iters": self.newton_iters,
        }


def _renamed(led: Ledger, name: str) -> Ledger:
    led.name = name
    return led


def step_report(new: State, old: State, stats: SolveStats | None, params: SchemeParams, mask: DomainMask,
                bdata: BoundaryData, renorm: tuple[str, ...] = ("square", "rho_log_rho")) -> BalanceReport:
    """All ledgers for one accepted step.

    Entropy and ballistic columns use ``phi = theta_B`` (at the old and new
    time); the entropy identity is also evaluated with ``phi = 1``.
    """
    g = mask.grid
    phi = bdata.theta_b_at(new.t)
    phi_old = bdata.theta_b_at(old.t)
    return BalanceReport(
        step=new.step, t=new.t,
        energy=energy_balance(new, old, params, mask, bdata),
        entropy=entropy_balance(new, old, phi, params, mask, bdata),
        entropy_unit=_renamed(entropy_balance(new, old, np.ones(g.shape), params, mask, bdata), "entropy_phi1"),
        ballistic=ballistic_balance(new, old, phi, params, mask, bdata, phi_old),
        renormalized={name: renormalized_continuity_check(new, old, name, phi, params, g) for name in renorm},
        min_rho=float(new.rho.min()), max_rho=float(new.rho.max()),
        min_theta=float(new.theta.min()), max_theta=float(new.theta.max()),
        mass=ops.integrate(new.rho, g), newton_iters=stats.iterations if stats else 0,
    )


class LedgerHook:
    """``run_simulation`` hook producing one BalanceReport per step and
    updating a BoundsMonitor."""

    def __init__(self, params: SchemeParams, mask: DomainMask, bdata: BoundaryData,
                 monitor: BoundsMonitor | None = None):
        self.params, self.mask, self.bdata = params, mask, bdata
        self.monitor = monitor or BoundsMonitor()

    def __call__(self, new: State, old: State, stats: SolveStats) -> BalanceReport:
        bounds_monitor(new, self.monitor, self.params, self.mask, self.bdata)
        return step_report(new, old, stats, self.params, self.mask, self.bdata)
