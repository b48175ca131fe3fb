from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twospeed.errors import ParameterError, RefusedError, ValidationError
from twospeed.geometry import Grid
from twospeed.scalecalc import (K_MAX, apply_S, apply_S_power, box_commutator_residual, null_derivative,
                                null_commutator_residual, scaling_fd, space_derivative, time_derivative)
from twospeed.waveop import SpaceTimeTrace, manufactured_solution, solve_linear

GRID = Grid.for_problem(10.0, c=2.0, dx=1 / 8)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_scaling_of_homogeneous_quadratics(a, b, c):
    # S f = 2 f for f homogeneous of degree 2 in (t, x); the stencils are exact on quadratics.
    t = GRID.t[:, None]
    x = GRID.x[None, :]
    f = a * t * t + b * t * x + c * x * x
    Sf = scaling_fd(f, GRID.t, GRID.x, GRID.dt, GRID.dx)
    assert np.allclose(Sf, 2 * f, atol=1e-9 * (1 + np.abs(f).max()))


def test_null_derivatives_sum_to_time_derivative():
    tr = manufactured_solution("dalembert_bump", GRID, 1.0, center=2.0, width=1.0, profile="poly")
    du = null_derivative(tr, "u").samples
    dub = null_derivative(tr, "ubar").samples
    assert np.allclose(du + dub, time_derivative(tr).samples)
    duc = null_derivative(tr, "u_c", 2.0).samples
    dubc = null_derivative(tr, "ubar_c", 2.0).samples
    assert np.allclose(2.0 * (duc + dubc), time_derivative(tr).samples)
    assert space_derivative(tr).parity == "even"
    with pytest.raises(ParameterError):
        null_derivative(tr, "v")


def test_outgoing_wave_has_small_good_derivative():
    g = Grid.for_problem(10.0, c=1.0, dx=1 / 32)
    tr = manufactured_solution("dalembert_bump", g, 1.0, center=2.0, width=1.0, profile="poly")
    good = np.abs(null_derivative(tr, "ubar").samples[:, g.nx // 2:]).max()
    bad = np.abs(null_derivative(tr, "u").samples[:, g.nx // 2:]).max()
    assert good < 1e-2 * bad


def test_k_max_is_enforced():
    tr = manufactured_solution("standing_wave", GRID, 1.0)
    with pytest.raises(RefusedError):
        apply_S_power(tr, K_MAX["finite_difference"] + 1)
    with pytest.raises(ParameterError):
        apply_S_power(tr, -1)
    with pytest.raises(ParameterError):
        apply_S(tr, "spectral")


def test_commuted_route_needs_solver_trace():
    tr = manufactured_solution("standing_wave", GRID, 1.0)
    derived = tr.with_samples(tr.samples)
    with pytest.raises(ValidationError):
        apply_S(derived, "commuted_pde")


def test_two_routes_agree_and_converge():
    rel = []
    for nx in (512, 1024):
        dx = 32 / nx
        g = Grid(x_max=16.0, nx=nx, t_end=12.0, nsteps=int(round(8 / (0.8 * dx))))
        ex = manufactured_solution("dalembert_bump", g, 1.0, center=1.0, width=1.0, profile="poly")
        tr = solve_linear((ex.samples[0], ex.velocity0), None, 1.0, g, store_stride=1)
        fd = apply_S(tr, "finite_difference").samples
        cp = apply_S(tr, "commuted_pde").samples
        rel.append(np.linalg.norm(fd - cp) / np.linalg.norm(cp))
    assert rel[1] < rel[0] < 5e-2


def test_commuted_route_with_forcing():
    g = Grid.for_problem(8.0, c=2.0, dx=1 / 32)
    ex = manufactured_solution("drifting_bump", g, 2.0, center=2.0, width=1.5, velocity=1.0, profile="poly")
    tr = solve_linear((ex.samples[0], ex.velocity0), ex.forcing, 2.0, g, store_stride=1)
    fd = apply_S(tr, "finite_difference").samples
    cp = apply_S(tr, "commuted_pde").samples
    assert np.linalg.norm(fd - cp) / np.linalg.norm(cp) < 5e-2


def test_commutator_residuals_shrink():
    errs = []
    for n in (128, 256):
        g = Grid(x_max=8.0, nx=2 * n, t_end=8.0, nsteps=int(8 * n / 8 / 0.8 * 2))
        tr = manufactured_solution("standing_wave", g, 2.0, mode=2)
        keep = np.abs(g.x[2:-2]) > 0.5
        errs.append((np.abs(box_commutator_residual(tr)[:, keep]).max(),
                     np.abs(null_commutator_residual(tr, 2.0, exclude_origin=0.5)).max()))
    for k in range(2):
        assert np.log2(errs[0][k] / errs[1][k]) >= 1.8


def test_commutator_needs_speed():
    tr = SpaceTimeTrace(GRID, np.zeros((GRID.nsteps + 1, GRID.nx)), None)
    with pytest.raises(ValidationError):
        box_commutator_residual(tr)
