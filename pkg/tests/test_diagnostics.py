import dataclasses
import math

import numpy as np
import pytest

from penfv import diagnostics as dg
from penfv.geometry import extend_initial_data, make_shape
from penfv.mesh import build_grid, split_domain
from penfv.presets import initial_data
from penfv.scheme import (
    BoundaryData,
    SchemeParams,
    State,
    advance_step,
    assemble_residual,
    project_boundary,
    project_initial,
    run_simulation,
)


def make_case(n=8, alpha=0.0, kind="ball", theta_b=1.0, seed=0, velocity=0.3, theta_b_t=None, **kw):
    g = build_grid(2, n)
    spec = {"kind": kind}
    if kind == "ball":
        spec.update(center=(0.5, 0.5), radius=0.25)
    shape = make_shape(spec)
    mask = split_domain(g, shape)
    fns = initial_data("random", 2, amplitude=0.2, velocity=velocity, seed=seed)
    ext = extend_initial_data(fns, 1.0, theta_b, shape, 2)
    if theta_b_t is not None:
        ext = dataclasses.replace(ext, theta_b=theta_b_t)
    kw.setdefault("dt", 1e-3)
    kw.setdefault("eps", g.h**2)
    P = SchemeParams(h=g.h, alpha=alpha, **kw)
    return g, mask, P, project_initial(ext, g), project_boundary(ext, g, theta_b_t is not None)


def steps(state, P, mask, bdata, k):
    pairs = []
    for _ in range(k):
        new, _ = advance_step(state, P, mask, bdata)
        pairs.append((new, state))
        state = new
    return pairs


@pytest.fixture(scope="module")
def run5():
    g, mask, P, s0, b = make_case(alpha=0.5, lam=0.2, theta_b=lambda x: 1.0 + 0.1 * np.sin(2 * np.pi * x[0]))
    return g, mask, P, b, steps(s0, P, mask, b, 5)


def constant_case(kind="ball"):
    g, mask, P, _, _ = make_case(kind=kind)
    s = State(np.ones(g.shape), np.zeros((2,) + g.shape), np.ones(g.shape))
    b = BoundaryData(np.ones(g.shape), np.ones(g.shape))
    return g, mask, P, s, b


# --- closed forms ---------------------------------------------------------


def test_bregman_closed_forms():
    assert dg.bregman_rho_log_rho(1.0, 1.0) == 0.0
    assert dg.bregman_rho_log_rho(2.0, 1.0) == pytest.approx(2 * math.log(2) - 1, abs=1e-15)
    assert dg.bregman_rho_log_rho(2.0, 1.0) == pytest.approx(0.386294, abs=1e-6)
    assert dg.RENORMALIZATIONS["rho_log_rho"].remainder(2.0, 1.0) == pytest.approx(2 * math.log(2) - 1)
    assert dg.RENORMALIZATIONS["square"].remainder(3.0, 1.0) == pytest.approx(4.0)
    assert dg.bregman_log(2.0, 1.0) <= 0


def test_relative_energy_identical_states():
    g = build_grid(2, 4)
    rng = np.random.default_rng(0)
    s = State(1 + rng.random(g.shape), rng.standard_normal((2,) + g.shape), 1 + rng.random(g.shape))
    val, l2 = dg.relative_energy(s, s, 2.5, g)
    assert val == 0.0 and l2 == 0.0


def test_relative_energy_one_cell():
    # rho = rho_ref = 1, theta_ref = 1, theta = 2, c_v = 1.5:
    # H(1, 2) - H(1, 1) = (3 - 1.5 log 2) - 1.5
    g = build_grid(2, 4)
    ones = np.ones(g.shape)
    u = np.zeros((2,) + g.shape)
    val, _ = dg.relative_energy(State(ones, u, 2 * ones), State(ones, u, ones), 1.5, g)
    assert val == pytest.approx(1.5 * (1 - math.log(2)), rel=1e-14)
    assert val == pytest.approx(0.460279, abs=1e-6)


def test_relative_energy_nonnegative_samples():
    g = build_grid(2, 4)
    rng = np.random.default_rng(1)
    a = rng.uniform(0.5, 2.0, (10_000, 4))
    du = rng.uniform(-1, 1, (10_000, 2))
    for (r, t, rr, tr), w in zip(a, du):
        cell = lambda rho, theta, u: State(np.full((1, 1), rho), u.reshape(2, 1, 1), np.full((1, 1), theta))  # noqa: E731
        val, _ = dg.relative_energy(cell(r, t, w), cell(rr, tr, np.zeros(2)), 2.5, g)
        assert val >= 0.0


# --- constant state --------------------------------------------------------


def test_constant_state_ledgers_vanish():
    g, mask, P, s, b = constant_case()
    new, _ = advance_step(s, P, mask, b)
    e = dg.energy_balance(new, s, P, mask, b)
    assert e.residual == 0 and e["D_E"] == 0 and e["P_u"] == 0 and e["P_theta"] == 0
    ent = dg.entropy_balance(new, s, b.theta_b, P, mask, b)
    assert ent.residual == 0
    assert all(ent[k] == 0 for k in ("D_s1", "D_s2", "D_s3", "R_s"))
    bal = dg.ballistic_balance(new, s, b.theta_b, P, mask, b)
    assert bal.residual == 0 and bal["R_B1_time"] == 0
    r = dg.renormalized_continuity_check(new, s, "rho_log_rho", np.ones(g.shape), P, g)
    assert r.residual == 0 and r["time"] == 0


def test_constant_state_monitor():
    g, mask, P, s, b = constant_case()
    m = dg.bounds_monitor(s, dg.BoundsMonitor(), P, mask, b)
    assert m.rho_min == m.rho_max == 1.0 and m.theta_min == m.theta_max == 1.0
    assert m.face_dissipation == 0 and m.grad_theta_sq == 0 and m.sym_grad_sq == 0 and m.penalty == 0


# --- identities on random data ------------------------------------------------


def test_energy_ledger(run5):
    g, mask, P, b, pairs = run5
    for new, old in pairs:
        led = dg.energy_balance(new, old, P, mask, b)
        assert led.ok, led
        assert led["D_E_time"] >= 0 and led["D_E_visc_alpha"] >= 0 and led["D_E_upwind"] >= 0


@pytest.mark.parametrize("which", ["one", "theta_b"])
def test_entropy_ledger(run5, which):
    g, mask, P, b, pairs = run5
    for new, old in pairs:
        phi = np.ones(g.shape) if which == "one" else b.theta_b_at(new.t)
        led = dg.entropy_balance(new, old, phi, P, mask, b)
        assert led.ok, led
        assert led["D_s1"] >= 0 and led["D_s2"] >= 0 and led["D_s3"] >= 0


def test_ballistic_ledger(run5):
    g, mask, P, b, pairs = run5
    for new, old in pairs:
        led = dg.ballistic_balance(new, old, b.theta_b_at(new.t), P, mask, b)
        assert led.ok, led
        # time-independent test function: the time remainder vanishes
        assert led["R_B1_time"] == 0


def test_ballistic_ledger_custom_phi(run5):
    g, mask, P, b, pairs = run5
    x = g.cell_centers()
    phi = 1.0 + 0.1 * np.sin(2 * np.pi * x[0])
    phi = np.where(mask.outer, b.theta_b, phi)
    for new, old in pairs:
        assert dg.ballistic_balance(new, old, phi, P, mask, b).ok


def test_ballistic_time_dependent_phi():
    tb = lambda t, x: 1.0 + 0.2 * t + 0.1 * np.cos(2 * np.pi * x[1])  # noqa: E731
    g, mask, P, s0, b = make_case(theta_b_t=tb, alpha=0.3, dt=5e-3)
    for new, old in steps(s0, P, mask, b, 3):
        led = dg.ballistic_balance(new, old, b.theta_b_at(new.t), P, mask, b, b.theta_b_at(old.t))
        assert led.ok, led
        assert led["R_B1_time"] != 0
        assert dg.energy_balance(new, old, P, mask, b).ok
        assert dg.entropy_balance(new, old, b.theta_b_at(new.t), P, mask, b).ok


def test_viscous_production_two_ways(run5):
    g, mask, P, b, pairs = run5
    for new, _ in pairs:
        a = dg.viscous_production_contraction(new, b.theta_b, P, g)
        q = dg.viscous_production_quadratic(new, b.theta_b, P, g)
        assert a == pytest.approx(q, rel=1e-13)


def test_renormalized_linear_is_continuity():
    g, mask, P, s0, b = make_case(n=8, alpha=0.5)
    new, _ = advance_step(s0, P, mask, b)
    rng = np.random.default_rng(3)
    phi = rng.random(g.shape)
    led = dg.renormalized_continuity_check(new, s0, "linear", phi, P, g)
    assert led["time_remainder"] == 0 and led["upwind"] == 0
    # linear B: the identity is the continuity rows tested with phi
    rows = assemble_residual(new, s0, P, mask, b)[: g.ncells].reshape(g.shape)
    assert abs(led.residual - float(np.sum(phi * rows))) <= 1e-12 * led.scale


@pytest.mark.parametrize("name", ["square", "rho_log_rho"])
def test_renormalized_one_step(name):
    g = build_grid(2, 4)
    mask = split_domain(g, make_shape({"kind": "full"}))
    fns = initial_data("random", 2, amplitude=0.3, velocity=0.5, seed=7)
    ext = extend_initial_data(fns, 1.0, 1.0, make_shape({"kind": "full"}), 2)
    P = SchemeParams(dt=1e-2, h=g.h, eps=1.0, alpha=0.0)
    s0, b = project_initial(ext, g), project_boundary(ext, g)
    new, _ = advance_step(s0, P, mask, b)
    assert dg.renormalized_continuity_check(new, s0, name, np.ones(g.shape), P, g).ok


def test_penalty_decay_reduces_energy_identity():
    g, mask, P, _, _ = make_case(kind="empty", eps=1e-3, dt=1e-3)
    u0 = np.array([0.3, -0.2])
    s = State(np.ones(g.shape), u0.reshape(2, 1, 1) * np.ones((2,) + g.shape), np.ones(g.shape))
    b = BoundaryData(np.ones(g.shape), np.ones(g.shape))
    new, _ = advance_step(s, P, mask, b)
    led = dg.energy_balance(new, s, P, mask, b)
    u1 = u0 / (1 + P.dt / P.eps)
    usq0, usq1, du2 = np.sum(u0**2), np.sum(u1**2), np.sum((u1 - u0) ** 2)
    assert led["E_new"] - led["E_old"] == pytest.approx(0.5 * (usq1 - usq0), rel=1e-9)
    assert led["P_u"] == pytest.approx(usq1 / P.eps, rel=1e-9)
    assert led["D_E"] == pytest.approx(0.5 * P.dt * du2 / P.dt**2, rel=1e-9)
    assert led.ok


def test_face_dissipation_cross_check():
    g, mask, P, s0, b = make_case(alpha=0.5)
    mon = dg.BoundsMonitor()
    total = 0.0
    for new, old in steps(s0, P, mask, b, 10):
        dg.bounds_monitor(new, mon, P, mask, b)
        total += P.dt * dg.entropy_dissipation(new, old, b.theta_b, P, g)["face_dissipation"]
    assert mon.steps == 10
    assert mon.face_dissipation == pytest.approx(total, rel=1e-12)


def test_step_report_and_hook():
    g, mask, P, s0, b = make_case(alpha=0.0)
    hook = dg.LedgerHook(P, mask, b)
    res = run_simulation(s0, P, mask, b, 3 * P.dt, hooks=[hook])
    assert len(res.reports) == 3
    for rep in res.reports:
        assert rep.ok, rep.failures()
        row = rep.row()
        assert tuple(row) == dg.CSV_COLUMNS
        assert row["newton_iters"] >= 1
    names = [led.name for led in res.reports[0].ledgers]
    assert len(set(names)) == len(names)
    assert hook.monitor.steps == 3 and hook.monitor.finite()


def test_report_flags_broken_identity():
    g, mask, P, s0, b = make_case()
    new, stats = advance_step(s0, P, mask, b)
    bad = new.copy()
    bad.theta = bad.theta * (1 + 1e-6)
    rep = dg.step_report(bad, s0, stats, P, mask, b)
    assert not rep.ok
    assert any(f.startswith("energy") for f in rep.failures())
