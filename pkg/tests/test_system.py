from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twospeed.errors import ParameterError, ValidationError
from twospeed.geometry import Grid
from twospeed.system import (DataFamily, bisect_contraction, blowup_time, centered_velocity,
                             contraction_holds, picard_iterate, radial_residual, reconstruct_3d,
                             solve_coupled)
from twospeed.waveop import solve_linear


@pytest.fixture(scope="module")
def grid():
    return Grid.for_problem(10.0, c=2.0, dx=1 / 16)


@given(st.sampled_from(["standard-bump", "pessimal"]), st.floats(0.0, 5.0))
def test_data_is_odd_and_scales(name, eps):
    g = Grid.for_problem(8.0, c=2.0, dx=1 / 8)
    d = DataFamily(name, eps)
    for s, s1 in zip(d.slices(g.x), d.with_epsilon(1.0).slices(g.x)):
        assert np.array_equal(s, -s[::-1])
        assert np.allclose(s, eps * s1)
        assert np.all(s[np.abs(g.x) >= 1] == 0)


def test_data_family_validation():
    with pytest.raises(ParameterError):
        DataFamily("nope", 1.0)
    with pytest.raises(ParameterError):
        DataFamily("standard-bump", -1.0)


def test_uncoupled_run_is_two_linear_solves(grid):
    data = DataFamily("standard-bump", 0.7, nonlinear=False)
    V, W = solve_coupled(data, 2.0, grid, engine="numpy")
    v0, v1, w0, w1 = data.slices(grid.x)
    assert np.allclose(V.samples, solve_linear((v0, v1), None, 1.0, grid, store_stride=1).samples, atol=1e-14)
    assert np.allclose(W.samples, solve_linear((w0, w1), None, 2.0, grid, store_stride=1).samples, atol=1e-14)


@pytest.mark.parametrize("scheme", ["centered", "lagged"])
@pytest.mark.parametrize("name,eps", [("standard-bump", 0.5), ("pessimal", 8.0)])
def test_engines_agree_bitwise(grid, scheme, name, eps):
    a = solve_coupled(DataFamily(name, eps), 2.0, grid, scheme=scheme, engine="numpy", store_stride=4)
    b = solve_coupled(DataFamily(name, eps), 2.0, grid, scheme=scheme, engine="numba", store_stride=4)
    for x, y in zip(a, b):
        assert np.array_equal(x.samples, y.samples)
        assert np.array_equal(x.forcing, y.forcing)
        assert x.blowup_time == y.blowup_time
    assert np.array_equal(a[0].diagnostics["amplitude"], b[0].diagnostics["amplitude"])


def test_schemes_agree_to_first_order(grid):
    d = DataFamily("standard-bump", 0.3)
    a = solve_coupled(d, 2.0, grid, scheme="centered")[0].samples
    b = solve_coupled(d, 2.0, grid, scheme="lagged")[0].samples
    assert np.max(np.abs(a - b)) < 1e-2 * np.max(np.abs(a))


def test_large_data_blows_up(grid):
    V, W = solve_coupled(DataFamily("pessimal", 8.0), 2.0, grid)
    assert V.blowup_time is not None and 4.0 < V.blowup_time < 10.0
    assert np.all(np.isfinite(V.samples)) and np.all(np.isfinite(W.samples))
    assert V.diagnostics["amplitude"][-1] > V.diagnostics["threshold"]
    assert blowup_time(V, W, V.diagnostics["threshold"]) == V.blowup_time


def test_blowup_from_samples(grid):
    V, W = solve_coupled(DataFamily("standard-bump", 0.1), 2.0, grid)
    assert blowup_time(V, W, 1e9) is None
    assert blowup_time(V.with_samples(V.samples), W, 1e-6) is not None


def test_solver_validation(grid):
    d = DataFamily("standard-bump", 1.0)
    with pytest.raises(ParameterError):
        solve_coupled(d, 1.0, grid)
    with pytest.raises(ParameterError):
        solve_coupled(d, 2.0, grid, scheme="implicit")
    with pytest.raises(ParameterError):
        solve_coupled(d, 2.0, grid, engine="fortran")
    with pytest.raises(ParameterError):
        solve_coupled(d, 2.0, grid, threshold=1e-9)
    with pytest.raises(ValidationError):
        solve_coupled(d, 2.0, Grid.for_problem(10.0, c=1.0, dx=1 / 16))


def test_zero_data_stays_zero(grid):
    V, W = solve_coupled(DataFamily("standard-bump", 0.0), 2.0, grid)
    assert not np.any(V.samples) and not np.any(W.samples) and V.blowup_time is None


def test_first_iterate_is_linear_solve(grid):
    d = DataFamily("standard-bump", 0.5)
    led = picard_iterate(d, 2.0, grid, 1, norms=False)
    v0, v1, _, _ = d.slices(grid.x)
    lin = solve_linear((v0, v1), None, 1.0, grid, store_stride=1)
    assert np.array_equal(led.latest()[0].samples, lin.samples)


def test_iteration_converges_to_direct_solution(picard_grid, tmp_path):
    d = DataFamily("standard-bump", 0.2)
    led = picard_iterate(d, 2.0, picard_grid, 6, spill_dir=tmp_path)
    V, _ = solve_coupled(d, 2.0, picard_grid)
    Vj = led.latest()[0]
    assert np.max(np.abs(V.samples - Vj.samples)) < 1e-8
    assert contraction_holds(led)
    assert sorted(led.traces) == [4, 5, 6]
    assert (tmp_path / "iterate_003_V.mswl").exists()
    rows = led.rows
    assert rows[0]["contraction_ratio"] is None and all("M_terms" in r for r in rows)
    assert np.all(led.M() <= 2 * led.M()[0])


def test_iteration_needs_sane_arguments(grid):
    with pytest.raises(ParameterError):
        picard_iterate(DataFamily("standard-bump", 0.1), 2.0, grid, 0)
    with pytest.raises(ParameterError):
        picard_iterate(DataFamily("standard-bump", 0.1), 1.0, grid, 2)


def test_bisection_brackets_need_sign_change(picard_grid):
    with pytest.raises(ValidationError):
        bisect_contraction("standard-bump", 2.0, picard_grid, 2.0, 4.0, steps=1)


def test_centered_velocity_uses_data(grid):
    d = DataFamily("standard-bump", 0.5)
    V, _ = solve_coupled(d, 2.0, grid)
    vt = centered_velocity(V)
    assert np.array_equal(vt[0], d.slices(grid.x)[1])
    with pytest.raises(ValidationError):
        centered_velocity(solve_coupled(d, 2.0, grid, store_stride=2)[0])


def test_reconstruction_is_even_and_solves_radial_equation():
    g = Grid.for_problem(10.0, c=2.0, dx=1 / 32)
    d = DataFamily("standard-bump", 1.0, nonlinear=False)
    V, W = solve_coupled(d, 2.0, g)
    rad = reconstruct_3d(V, W)
    assert np.allclose(rad.v.samples, rad.v.samples[:, ::-1])
    r, v, w = rad.positive()
    assert np.all(r > 0) and v.shape == w.shape
    # The line scheme for W = r w is the radial scheme for w, so the residual is round-off.
    res = radial_residual(rad.w, 2.0)
    s = rad.w.samples
    wtt = (s[2:] - 2 * s[1:-1] + s[:-2]) / g.dt ** 2
    assert np.max(np.abs(res[:, 5:])) < 1e-10 * np.abs(wtt).max()
