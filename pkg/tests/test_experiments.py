import math

import numpy as np
import pytest

from penfv.experiments import (
    METRICS,
    EOCTable,
    Reference,
    SweepSpec,
    compute_eoc,
    convergence_study,
    generate_reference,
    restrict,
    restricted_reference,
)
from penfv.mesh import build_grid
from penfv.scheme import Scheme


def block_mean_oracle(fine, factor):
    n = fine.shape[0] // factor
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for a in range(factor):
                for b in range(factor):
                    acc += fine[i * factor + a, j * factor + b]
            out[i, j] = acc / factor**2
    return out


def test_eoc_synthetic():
    np.testing.assert_allclose(compute_eoc([4e-2, 2e-2, 1e-2], [0.1, 0.05, 0.025]), [1.0, 1.0], rtol=1e-14)


def test_eoc_undefined_for_zero_errors():
    orders = compute_eoc([0.0, 0.0, 1e-3], [0.1, 0.05, 0.025])
    assert all(math.isnan(o) for o in orders)
    with pytest.raises(ValueError):
        compute_eoc([1.0], [0.1, 0.05])


def test_restrict_identity_and_shapes():
    rng = np.random.default_rng(0)
    a = rng.random((8, 8))
    np.testing.assert_array_equal(restrict(a, 1, 2), a)
    v = rng.random((2, 8, 8))
    assert restrict(v, 4, 2).shape == (2, 2, 2)
    np.testing.assert_allclose(restrict(v, 4, 2)[1], block_mean_oracle(v[1], 4), rtol=1e-15)
    with pytest.raises(ValueError):
        restrict(rng.random((6, 6)), 4, 2)


def test_restriction_of_disk_run_matches_block_means():
    spec = SweepSpec(n_list=(16,), n_ref=64)
    grid, mask, params, state, bdata = spec.setup(64)
    new, _ = Scheme(grid, params, mask).advance(state, bdata)
    for field in (new.rho, new.theta, new.u[0]):
        np.testing.assert_allclose(restrict(field, 4, 2), block_mean_oracle(field, 4), rtol=1e-14)
    coarse_grid, coarse_mask, _, _, coarse_b = spec.setup(16)
    rs = restricted_reference(new, grid, coarse_mask, coarse_b)
    inside = ~coarse_mask.exterior
    np.testing.assert_allclose(rs.rho[inside], block_mean_oracle(new.rho, 4)[inside], rtol=1e-14)
    assert np.all(rs.u[:, coarse_mask.exterior] == 0)
    assert np.all(rs.theta[coarse_mask.exterior] == coarse_b.theta_b[coarse_mask.exterior])


def test_reference_restricted_to_itself_is_exact():
    spec = SweepSpec(n_list=(16,), n_ref=64)
    grid, mask, params, state, bdata = spec.setup(16)
    rs = restricted_reference(state, grid, mask, bdata)
    np.testing.assert_array_equal(rs.rho, state.rho)
    np.testing.assert_array_equal(rs.theta, state.theta)


@pytest.mark.parametrize("kw,fragment", [
    ({"n_list": (8, 12)}, "not nested"),
    ({"n_list": (8, 16), "n_ref": 32}, "at least 4x"),
    ({"n_list": (8, 16), "n_ref": 64, "t_end": 1e-3}, "integer multiple"),
    ({"alpha": -2.0}, "α"),
])
def test_spec_validation(kw, fragment):
    spec = SweepSpec(**kw)
    assert any(fragment in e for e in spec.errors())
    with pytest.raises(ValueError):
        spec.validate()


def test_default_spec_is_valid():
    assert SweepSpec().errors() == []


def constant_spec():
    return SweepSpec(n_list=(8, 16), n_ref=64, preset="constant", preset_args={}, dt_power=1.0, t_end=1 / 8)


def test_constant_state_study(tmp_path):
    spec = constant_spec()
    table = convergence_study(spec, output_dir=tmp_path)
    for m in METRICS:
        assert table.errors(m) == [0.0, 0.0]
        assert table.undefined_orders(m) == [0]
    assert not any(r["failed"] for r in table.rows)
    assert (tmp_path / "eoc.csv").exists() and "eoc" in (tmp_path / "eoc.txt").read_text()


def test_reference_round_trip(tmp_path):
    spec = constant_spec()
    ref = generate_reference(spec, tmp_path / "ref.npz")
    back = Reference.load(tmp_path / "ref.npz")
    assert back.n == 64 and back.spec["n_list"] == [8, 16]
    np.testing.assert_array_equal(back.steps, ref.steps)
    s = back.state_at(1 / 16)
    assert s.step == 4
    with pytest.raises(KeyError):
        back.state_at(1 / 64)
    with pytest.raises(ValueError):
        convergence_study(SweepSpec(n_list=(8, 16), n_ref=128, preset="constant", preset_args={},
                                    dt_power=1.0, t_end=1 / 8), reference=back)


def test_failed_row_is_reported(monkeypatch, tmp_path):
    from penfv import experiments
    from penfv.scheme import NoConvergence

    def boom(*a, **k):
        raise NoConvergence("forced")

    spec = constant_spec()
    ref = generate_reference(spec)
    monkeypatch.setattr(experiments, "run_resolution", boom)
    table = convergence_study(spec, reference=ref, output_dir=tmp_path)
    assert all(r["failed"] for r in table.rows)
    assert "FAILED" in (tmp_path / "eoc.txt").read_text()


def test_table_text_and_csv(tmp_path):
    t = EOCTable(rows=[
        {"n": 8, "h": 0.125, "errors": {m: 4e-2 for m in METRICS}, "tracked": {"penalty": 1.0}},
        {"n": 16, "h": 0.0625, "errors": {m: 1e-2 for m in METRICS}, "tracked": {"penalty": 1.0}},
    ])
    assert t.orders("rel_energy") == pytest.approx([2.0])
    lines = t.to_csv(tmp_path / "e.csv").read_text().splitlines()
    assert lines[0].startswith("n,h,rel_energy") and len(lines) == 3
    assert "2.000" in t.to_text()


def test_grid_helper_consistency():
    spec = SweepSpec()
    assert spec.h(32) == build_grid(2, 32).h
    assert spec.dt(32) == pytest.approx(32.0**-2) and spec.eps(32) == pytest.approx(32.0**-2)
    times = spec.snapshot_times()
    assert times[0] == 0 and times[-1] == pytest.approx(spec.t_end)
