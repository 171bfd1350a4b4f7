import numpy as np
import pytest

from penfv.config import ConfigError, RunConfig, config_dict, parse_config, serialize_config
from penfv.diagnostics import CSV_COLUMNS, LedgerHook
from penfv.geometry import make_shape
from penfv.mesh import Grid, build_grid, split_domain
from penfv.output import read_diagnostics_csv, read_snapshot, write_diagnostics_csv, write_snapshot
from penfv.scheme import BoundaryData, State, project_boundary, project_initial, run_simulation


def test_defaults():
    cfg = parse_config("cfg.ini", text="")
    assert (cfg.dim, cfg.n, cfg.L) == (2, 16, 1.0)
    assert cfg.dt == pytest.approx(1 / 256) and cfg.eps == pytest.approx(1 / 256)
    assert cfg.t_end == pytest.approx(10 * cfg.dt)
    assert cfg.alpha == 0.0 and cfg.gamma == 1.4 and cfg.tol_newton == 1e-11
    assert cfg.shape == "ball" and cfg.center == (0.5, 0.5) and cfg.theta0 == cfg.theta_b
    assert cfg.preset == "gaussian-bump"


def test_missing_file():
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config("/nonexistent/cfg.ini")


@pytest.mark.parametrize("text,msg", [
    ("[physics]\ngamma = 0.9\n", "γ must exceed 1"),
    ("[scheme]\nalpha = -1.0\n", "α > −1"),
])
def test_semantic_errors(text, msg):
    with pytest.raises(ConfigError) as exc:
        parse_config("cfg.ini", text=text)
    assert any(msg in e for e in exc.value.errors)


def test_all_errors_collected():
    text = "[physics]\ngamma = 0.9\nkappa = -1\n[scheme]\nalpha = -2\n"
    with pytest.raises(ConfigError) as exc:
        parse_config("cfg.ini", text=text)
    errs = exc.value.errors
    assert len(errs) == 3
    assert any("γ" in e for e in errs) and any("κ" in e for e in errs) and any("α" in e for e in errs)


def test_unknown_keys_and_bad_values_collected():
    with pytest.raises(ConfigError) as exc:
        parse_config("cfg.ini", text="[grid]\nn = abc\nfoo = 1\n[bogus]\nx = 2\n")
    assert len(exc.value.errors) == 3


def test_syntax_error_has_line_number():
    with pytest.raises(ConfigError) as exc:
        parse_config("cfg.ini", text="[grid]\nn = 8\nthis line has no separator\n")
    assert "line 3" in exc.value.errors[0]


def test_non_integer_step_count():
    with pytest.raises(ConfigError) as exc:
        parse_config("cfg.ini", text="[grid]\nn = 8\n[scheme]\ndt = 0.01\nt_end = 0.015\n")
    assert any("integer multiple" in e for e in exc.value.errors)


def test_fraction_values():
    cfg = parse_config("cfg.ini", text="[grid]\nn = 8\n[scheme]\ndt = 1/64\nt_end = 1/16\n")
    assert cfg.dt == 1 / 64 and cfg.t_end == 1 / 16


@pytest.mark.parametrize("text", [
    "",
    "[grid]\nn = 8\n[scheme]\nalpha = 0.5\nt_end = 1/32\n[initial]\npreset = random\namplitude = 0.2\n",
    "[grid]\ndim = 3\nn = 8\n[geometry]\nshape = box\nhalf_widths = 0.25, 0.25, 0.25\n",
    "[geometry]\nshape = ellipsoid\nradii = 0.3, 0.2\ntheta_b_gradient = 0.5, 0\n[run]\nseed = 7\n",
])
def test_parse_serialize_fixed_point(text):
    a = parse_config("cfg.ini", text=text)
    s = serialize_config(a)
    b = parse_config("cfg.ini", text=s)
    assert config_dict(a) == config_dict(b)
    assert serialize_config(b) == s


def test_build_from_config():
    cfg = parse_config("cfg.ini", text="[grid]\nn = 8\n")
    grid, mask, params, ext = cfg.build()
    assert grid.n == 8 and params.h == grid.h and mask.fluid.sum() > 0
    assert isinstance(RunConfig().resolve().dt, float)


# --- CSV -------------------------------------------------------------------


def test_csv_header_only(tmp_path):
    path = write_diagnostics_csv([], tmp_path / "d.csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def constant_run(steps=3):
    g = build_grid(2, 8)
    mask = split_domain(g, make_shape({"kind": "ball", "center": (0.5, 0.5), "radius": 0.25}))
    cfg = parse_config("cfg.ini", text="[grid]\nn = 8\n[initial]\npreset = constant\n")
    _, _, params, _ = cfg.build()
    s = State(np.ones(g.shape), np.zeros((2,) + g.shape), np.ones(g.shape))
    b = BoundaryData(np.ones(g.shape), np.ones(g.shape))
    return run_simulation(s, params, mask, b, steps * params.dt, hooks=[LedgerHook(params, mask, b)])


def test_csv_constant_run(tmp_path):
    res = constant_run()
    rows = read_diagnostics_csv(write_diagnostics_csv(res.reports, tmp_path / "d.csv"))
    assert len(rows) == 3
    balance = ("P_u", "P_theta", "P_theta_sq", "D_E", "D_E_time", "D_E_visc_alpha", "D_E_upwind", "D_s1",
               "D_s2", "D_s3", "R_s", "R_B1", "R_B2", "res_energy", "res_entropy", "res_ballistic")
    for r in rows:
        assert all(r[c] == 0.0 for c in balance)
    assert len({r["mass"] for r in rows}) == 1
    assert [r["step"] for r in rows] == [1, 2, 3]


def test_csv_floats_round_trip(tmp_path):
    row = {c: 0.1 + i / 3 for i, c in enumerate(CSV_COLUMNS)}
    row["step"], row["newton_iters"] = 4, 2
    back = read_diagnostics_csv(write_diagnostics_csv([row], tmp_path / "d.csv"))[0]
    assert back == row


def test_csv_deterministic(tmp_path):
    cfg = parse_config("cfg.ini", text="[grid]\nn = 8\n[scheme]\nt_end = 5/64\n"
                       "[initial]\npreset = random\namplitude = 0.2\n[run]\nseed = 3\n")
    outs = []
    for k in range(2):
        grid, mask, params, ext = cfg.build()
        s, b = project_initial(ext, grid), project_boundary(ext, grid)
        res = run_simulation(s, params, mask, b, cfg.t_end, hooks=[LedgerHook(params, mask, b)])
        outs.append(write_diagnostics_csv(res.reports, tmp_path / f"{k}.csv").read_bytes())
    assert outs[0] == outs[1]


# --- VTK ---------------------------------------------------------------------


def test_snapshot_two_by_two(tmp_path):
    g = Grid(2, 2)
    mask = split_domain(g, make_shape({"kind": "full"}))
    s = State(np.full(g.shape, 1.5), np.zeros((2,) + g.shape), np.full(g.shape, 2.0))
    text = write_snapshot(s, mask, tmp_path / "s.vtk").read_text()
    assert "DATASET STRUCTURED_POINTS" in text and "DIMENSIONS 3 3 1" in text and "SPACING 0.5 0.5 1.0" in text
    snap = read_snapshot(tmp_path / "s.vtk")
    for name in ("rho", "theta", "mask"):
        assert snap[name].size == 4
    assert np.all(snap["rho"] == 1.5) and np.all(snap["mask"] == 0)
    assert snap["spacing"][:2] == [0.5, 0.5]


def test_snapshot_round_trip(tmp_path):
    g = build_grid(2, 16)
    mask = split_domain(g, make_shape({"kind": "ball", "center": (0.5, 0.5), "radius": 0.3}))
    rng = np.random.default_rng(0)
    s = State(1 + rng.random(g.shape), rng.standard_normal((2,) + g.shape), 1 + rng.random(g.shape), 0.25, 4)
    snap = read_snapshot(write_snapshot(s, mask, tmp_path / "s.vtk"))
    np.testing.assert_array_equal(snap["rho"], s.rho)
    np.testing.assert_array_equal(snap["theta"], s.theta)
    np.testing.assert_array_equal(snap["u"], s.u)
    np.testing.assert_array_equal(snap["mask"], mask.indicator)
    assert set(np.unique(snap["mask"])) == {0.0, 1.0}


def test_snapshot_3d(tmp_path):
    g = build_grid(3, 4)
    mask = split_domain(g, make_shape({"kind": "full"}))
    rng = np.random.default_rng(1)
    s = State(1 + rng.random(g.shape), rng.standard_normal((3,) + g.shape), 1 + rng.random(g.shape))
    snap = read_snapshot(write_snapshot(s, mask, tmp_path / "s.vtk"))
    np.testing.assert_array_equal(snap["u"], s.u)
    # x index varies fastest in the file
    lines = (tmp_path / "s.vtk").read_text().splitlines()
    first = lines.index("SCALARS rho double 1") + 2
    assert float(lines[first + 1]) == s.rho[1, 0, 0]
