"""Self-convergence studies against a fine-grid reference and EOC tables."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ops
from .diagnostics import BoundsMonitor, bounds_monitor, relative_energy
from .geometry import extend_initial_data, make_shape
from .mesh import DomainMask, Grid, build_grid, split_domain
from .presets import initial_data
from .scheme import BoundaryData, Scheme, SchemeParams, SolverError, State, project_boundary, project_initial, step_count

log = logging.getLogger(__name__)

METRICS = ("rel_energy", "l2_final", "linf_l2", "sym_grad_u", "grad_theta")
TRACKED = ("penalty", "u_solid_l2")


def _default_shape():
    return {"kind": "ball", "center": [0.5, 0.5], "radius": 0.25}


@dataclass
class SweepSpec:
    """Mesh family with coupling ``dt = dt_coeff h^dt_power`` and
    ``eps = eps_coeff h^eps_power``."""

    n_list: tuple = (8, 16, 32)
    n_ref: int = 128
    dim: int = 2
    L: float = 1.0
    shape: dict = field(default_factory=_default_shape)
    preset: str = "gaussian-bump"
    preset_args: dict = field(default_factory=lambda: {"amplitude": 0.3, "width": 0.1})
    rho_s: float = 1.0
    theta_b: float = 1.0
    mu: float = 1.0
    lam: float = 0.0
    kappa: float = 1.0
    gamma: float = 1.4
    alpha: float = 0.0
    dt_coeff: float = 1.0
    dt_power: float = 2.0
    eps_coeff: float = 1.0
    eps_power: float = 2.0
    t_end: float = 1.0 / 64
    tol_newton: float = 1e-11
    max_newton: int = 30

    def h(self, n: int) -> float:
        return self.L / n

    def dt(self, n: int) -> float:
        return self.dt_coeff * self.h(n) ** self.dt_power

    def eps(self, n: int) -> float:
        return self.eps_coeff * self.h(n) ** self.eps_power

    def params(self, n: int) -> SchemeParams:
        return SchemeParams(dt=self.dt(n), h=self.h(n), eps=self.eps(n), alpha=self.alpha, mu=self.mu,
                            lam=self.lam, kappa=self.kappa, gamma=self.gamma, tol_newton=self.tol_newton,
                            max_newton=self.max_newton)

    def errors(self) -> list[str]:
        errs = []
        ns = sorted(self.n_list)
        if not ns:
            errs.append("n_list is empty")
            return errs
        for a, b in zip(ns, ns[1:]):
            if b % a:
                errs.append(f"grids are not nested: {a} does not divide {b}")
        if self.n_ref % ns[-1]:
            errs.append(f"n_ref = {self.n_ref} is not a multiple of {ns[-1]}")
        if self.n_ref < 4 * ns[-1]:
            errs.append(f"n_ref = {self.n_ref} must be at least 4x the finest study grid {ns[-1]}")
        for n in ns + [self.n_ref]:
            try:
                step_count(self.t_end, self.dt(n))
            except ValueError as exc:
                errs.append(str(exc))
            errs.extend(f"n={n}: {e}" for e in self.params(n).errors())
        return errs

    def validate(self) -> "SweepSpec":
        errs = self.errors()
        if errs:
            raise ValueError("; ".join(errs))
        return self

    def setup(self, n: int) -> tuple[Grid, DomainMask, SchemeParams, State, BoundaryData]:
        grid = build_grid(self.dim, n, self.L)
        shape = make_shape(self.shape)
        mask = split_domain(grid, shape)
        center = self.shape.get("center")
        fluid = initial_data(self.preset, self.dim, center, theta=self.theta_b, L=self.L, **self.preset_args)
        ext = extend_initial_data(fluid, self.rho_s, self.theta_b, shape, self.dim)
        return grid, mask, self.params(n), project_initial(ext, grid), project_boundary(ext, grid)

    def snapshot_times(self) -> np.ndarray:
        """Step times of the finest study grid (which contain all coarser ones)."""
        dt = self.dt(max(self.n_list))
        return np.arange(step_count(self.t_end, dt) + 1) * dt

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_list"] = list(self.n_list)
        return d


# --- reference -------------------------------------------------------------


@dataclass
class Reference:
    n: int
    dt: float
    steps: np.ndarray  # reference step index of every snapshot
    rho: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    spec: dict = field(default_factory=dict)

    def state_at(self, t: float) -> State:
        k = int(round(t / self.dt))
        idx = np.flatnonzero(self.steps == k)
        if idx.size != 1:
            raise KeyError(f"no reference snapshot at t = {t}")
        i = int(idx[0])
        return State(self.rho[i], self.u[i], self.theta[i], k * self.dt, k)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, n=self.n, dt=self.dt, steps=self.steps, rho=self.rho, u=self.u,
                            theta=self.theta, spec=json.dumps(self.spec))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Reference":
        with np.load(path) as z:
            return cls(int(z["n"]), float(z["dt"]), z["steps"], z["rho"], z["u"], z["theta"],
                       json.loads(str(z["spec"])))


def generate_reference(spec: SweepSpec, path: str | Path | None = None, threads: int = 1) -> Reference:
    """Run the reference grid and keep snapshots at the study step times."""
    spec.validate()
    grid, mask, params, state, bdata = spec.setup(spec.n_ref)
    wanted = {int(round(t / params.dt)) for t in spec.snapshot_times()}
    scheme = Scheme(grid, params, mask, threads=threads)
    nsteps = step_count(spec.t_end, params.dt)
    snaps = [state.copy()] if 0 in wanted else []
    cur = state
    for _ in range(nsteps):
        cur, _ = scheme.advance(cur, bdata)
        if cur.step in wanted:
            snaps.append(cur.copy())
    ref = Reference(spec.n_ref, params.dt, np.array([s.step for s in snaps]),
                    np.stack([s.rho for s in snaps]), np.stack([s.u for s in snaps]),
                    np.stack([s.theta for s in snaps]), spec.to_dict())
    if path is not None:
        ref.save(path)
    return ref


def restrict(values: np.ndarray, factor: int, dim: int) -> np.ndarray:
    """Block means over ``factor^dim`` fine cells (trailing ``dim`` axes)."""
    values = np.asarray(values)
    if factor == 1:
        return values.copy()
    lead = values.shape[: values.ndim - dim]
    fine = values.shape[values.ndim - dim:]
    if any(m % factor for m in fine):
        raise ValueError(f"fine shape {fine} is not divisible by {factor}")
    split = lead + tuple(x for m in fine for x in (m // factor, factor))
    axes = tuple(len(lead) + 2 * k + 1 for k in range(dim))
    return values.reshape(split).mean(axis=axes)


def _ref_gradients(ref: State, ref_grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    return ops.sym_grad_h(ref.u, ref_grid), ops.grad_h(ref.theta, ref_grid)


def restricted_reference(ref: State, ref_grid: Grid, mask: DomainMask, bdata: BoundaryData) -> State:
    """Reference restricted to the coarse grid, with cells outside the fluid
    region overwritten by the solid extension ``(rho_s, 0, theta_B)``."""
    g = mask.grid
    f = ref_grid.n // g.n
    rho = restrict(ref.rho, f, g.dim)
    u = restrict(ref.u, f, g.dim)
    th = restrict(ref.theta, f, g.dim)
    ext = mask.exterior
    rho[ext] = bdata.rho_s[ext]
    u[:, ext] = 0.0
    th[ext] = bdata.theta_b_at(ref.t)[ext]
    return State(rho, u, th, ref.t, ref.step)


# --- EOC -------------------------------------------------------------------


def compute_eoc(errors, hs) -> list[float]:
    """Orders ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})``; NaN where undefined."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs):
        raise ValueError("errors and hs differ in length")
    out = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(hs, hs[1:])):
        ok = e0 > 0 and e1 > 0 and np.isfinite(e0) and np.isfinite(e1) and h0 != h1
        out.append(math.log(e0 / e1) / math.log(h0 / h1) if ok else math.nan)
    return out


@dataclass
class EOCTable:
    rows: list = field(default_factory=list)  # dicts with n, h, errors, tracked, failed, message
    metrics: tuple = METRICS

    def hs(self) -> list[float]:
        return [r["h"] for r in self.rows]

    def errors(self, metric: str) -> list[float]:
        return [r["errors"].get(metric, math.nan) for r in self.rows]

    def orders(self, metric: str) -> list[float]:
        return compute_eoc(self.errors(metric), self.hs())

    def undefined_orders(self, metric: str) -> list[int]:
        return [i for i, o in enumerate(self.orders(metric)) if math.isnan(o)]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        orders = {m: [math.nan] + self.orders(m) for m in self.metrics}
        tracked = sorted({k for r in self.rows for k in r.get("tracked", {})})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "h", *self.metrics, *(f"eoc_{m}" for m in self.metrics), *tracked, "failed"])
            for i, r in enumerate(self.rows):
                w.writerow([r["n"], repr(r["h"]), *(repr(float(r["errors"].get(m, math.nan))) for m in self.metrics),
                            *(repr(float(orders[m][i])) for m in self.metrics),
                            *(repr(float(r.get("tracked", {}).get(k, math.nan))) for k in tracked),
                            int(r.get("failed", False))])
        return path

    def to_text(self) -> str:
        head = f"{'n':>5} {'h':>10} " + " ".join(f"{m:>12} {'eoc':>6}" for m in self.metrics)
        lines = [head]
        orders = {m: [math.nan] + self.orders(m) for m in self.metrics}
        for i, r in enumerate(self.rows):
            cells = []
            for m in self.metrics:
                o = orders[m][i]
                cells.append(f"{r['errors'].get(m, math.nan):12.4e} {'-' if math.isnan(o) else f'{o:6.3f}':>6}")
            tail = "  FAILED: " + r.get("message", "") if r.get("failed") else ""
            lines.append(f"{r['n']:>5} {r['h']:10.4e} " + " ".join(cells) + tail)
        return "\n".join(lines)


def run_resolution(spec: SweepSpec, n: int, reference: Reference, threads: int = 1) -> dict:
    """One coarse run measured against the restricted reference."""
    grid, mask, params, state, bdata = spec.setup(n)
    ref_grid = build_grid(spec.dim, reference.n, spec.L)
    scheme = Scheme(grid, params, mask, threads=threads)
    nsteps = step_count(spec.t_end, params.dt)
    monitor = BoundsMonitor()
    f = reference.n // n
    ext = mask.exterior
    grad_tb = ops.grad_h(bdata.theta_b, grid)
    sup_l2 = 0.0
    gu = gt = u_solid = 0.0
    cur = state
    for _ in range(nsteps):
        cur, _ = scheme.advance(cur, bdata)
        bounds_monitor(cur, monitor, params, mask, bdata)
        ref = reference.state_at(cur.t)
        rs = restricted_reference(ref, ref_grid, mask, bdata)
        _, l2 = relative_energy(cur, rs, params.cv, grid)
        sup_l2 = max(sup_l2, math.sqrt(l2))
        du_ref, dt_ref = _ref_gradients(ref, ref_grid)
        du_ref = restrict(du_ref, f, spec.dim)
        dt_ref = restrict(dt_ref, f, spec.dim)
        du_ref[:, :, ext] = 0.0
        dt_ref[:, ext] = grad_tb[:, ext]
        gu += params.dt * grid.cell_volume * float(np.sum((ops.sym_grad_h(cur.u, grid) - du_ref) ** 2))
        gt += params.dt * grid.cell_volume * float(np.sum((ops.grad_h(cur.theta, grid) - dt_ref) ** 2))
        u_solid += params.dt * grid.cell_volume * float(np.sum(mask.indicator * np.sum(cur.u**2, axis=0)))
    rs = restricted_reference(reference.state_at(cur.t), ref_grid, mask, bdata)
    rel, l2 = relative_energy(cur, rs, params.cv, grid)
    errors = {"rel_energy": rel, "l2_final": math.sqrt(l2), "linf_l2": sup_l2,
              "sym_grad_u": math.sqrt(gu), "grad_theta": math.sqrt(gt)}
    tracked = {"penalty": monitor.penalty, "u_solid_l2": math.sqrt(u_solid)}
    return {"n": n, "h": grid.h, "errors": errors, "tracked": tracked, "failed": False, "steps": nsteps}


def convergence_study(spec: SweepSpec, reference: Reference | None = None, output_dir: str | Path | None = None,
                      threads: int = 1) -> EOCTable:
    """Run every resolution of the sweep; failed runs are marked, not raised."""
    spec.validate()
    if reference is None:
        t0 = time.perf_counter()
        reference = generate_reference(spec, threads=threads)
        log.info("reference n=%d done in %.1fs", spec.n_ref, time.perf_counter() - t0)
    if reference.n != spec.n_ref:
        raise ValueError("reference resolution differs from the sweep")
    table = EOCTable()
    for n in sorted(spec.n_list):
        t0 = time.perf_counter()
        try:
            row = run_resolution(spec, n, reference, threads=threads)
        except SolverError as exc:
            row = {"n": n, "h": spec.h(n), "errors": {m: math.nan for m in METRICS}, "tracked": {},
                   "failed": True, "message": str(exc)}
        row["seconds"] = time.perf_counter() - t0
        table.rows.append(row)
        log.info("n=%d done in %.1fs", n, row["seconds"])
    if output_dir is not None:
        out = Path(output_dir)
        table.to_csv(out / "eoc.csv")
        (out / "eoc.txt").write_text(table.to_text() + "\n")
    return table
