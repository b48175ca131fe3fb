from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twospeed.errors import DomainError, ParameterError
from twospeed.geometry import (SQRT_SIGMA_SLOPE_CONSTANT, DyadicRegion, Grid, NullCoords, RegionKind,
                               classify_point, enumerate_regions, japanese, label_points,
                               largest_dyadic_le, sigma_weight, sigma_weight_derivative,
                               sqrt_sigma_r_derivative_lower_bound, time_blocks, top_dyadic)

speeds = st.sampled_from([1.0, 1.5, 2.0, 3.0])
horizons = st.sampled_from([8.0, 20.0, 64.0, 100.0])


def test_grid_is_staggered_and_respects_cfl():
    g = Grid.for_problem(16.0, c=2.0, dx=1 / 16)
    assert np.min(np.abs(g.x)) == pytest.approx(g.dx / 2)
    assert np.allclose(g.x, -g.x[::-1])
    assert 2.0 * g.dt / g.dx <= 0.8 + 1e-12
    assert g.t[-1] == pytest.approx(16.0)
    # the support cone plus margin fits inside
    assert g.x_max >= 2.0 * 16 - 7


def test_refined_grid_halves_steps():
    g = Grid.for_problem(10.0, c=2.0, dx=1 / 8)
    f = g.refined()
    assert f.dx == pytest.approx(g.dx / 2) and f.dt == pytest.approx(g.dt / 2)
    assert f.x_max == g.x_max


@pytest.mark.parametrize("kw", [dict(x_max=-1, nx=4, t_end=8, nsteps=2), dict(x_max=1, nx=3, t_end=8, nsteps=2),
                                dict(x_max=1, nx=4, t_end=4, nsteps=2), dict(x_max=1, nx=4, t_end=8, nsteps=0)])
def test_grid_rejects_bad_parameters(kw):
    with pytest.raises(ParameterError):
        Grid(**kw)


def test_null_coordinates():
    n = NullCoords.at(10.0, 3.0, c=2.0)
    assert (n.u, n.ubar, n.u_c, n.ubar_c) == (7.0, 13.0, 17.0, 23.0)
    assert japanese(0.0) == 1.0


@given(st.floats(-1e3, 1e3), st.floats(1.0, 100.0))
def test_sigma_weight_is_odd_bounded(y, theta):
    s = sigma_weight(y, theta)
    assert abs(s) < 1
    assert sigma_weight(-y, theta) == -s
    assert sigma_weight_derivative(y, theta) > 0


def test_sigma_weight_rejects_small_theta():
    with pytest.raises(ParameterError):
        sigma_weight(1.0, 0.5)


def test_sqrt_sigma_slope_constant():
    assert SQRT_SIGMA_SLOPE_CONSTANT == pytest.approx(1 / (2 * 5 ** 1.5), rel=1e-14)
    for R in (1.0, 8.0, 1024.0):
        r = np.linspace(R / 64, 4 * R, 2001)
        val = sqrt_sigma_r_derivative_lower_bound(r, R)
        ratio = val * np.sqrt(r * R)
        assert ratio.min() == pytest.approx(SQRT_SIGMA_SLOPE_CONSTANT, rel=1e-9)


@given(st.floats(1.0, 1e12))
def test_largest_dyadic(y):
    d = largest_dyadic_le(y)
    assert d <= y < 2 * d
    assert math.log2(d).is_integer()


@given(horizons)
def test_time_blocks_cover_horizon(T):
    blocks = time_blocks(T)
    assert blocks[0] == 4.0
    assert blocks[-1] < T <= 2 * blocks[-1]


def _cone_point(data, c, T):
    t = data.draw(st.floats(4.0, T))
    rmax = c * t - (4 * c - 1)
    r = data.draw(st.floats(0.0, rmax))
    return t, r


@given(st.data(), speeds, horizons)
def test_classify_point_is_exactly_one_region(data, c, T):
    t, r = _cone_point(data, c, T)
    reg = classify_point(t, r, c, T)
    assert reg is not None and reg.contains(t, r)
    hits = [g for g in enumerate_regions(c, T) if g.contains(t, r)]
    assert hits == [reg]


@given(st.data(), speeds, horizons)
def test_enlarged_region_contains_plain(data, c, T):
    t, r = _cone_point(data, c, T)
    reg = classify_point(t, r, c, T)
    assert reg.enlarged(1.5).contains(t, r)


def test_points_outside_cone_are_unclassified():
    assert classify_point(5.0, 10.0, 2.0, 16.0) is None
    with pytest.raises(DomainError):
        classify_point(3.0, 0.0, 2.0, 16.0)
    with pytest.raises(DomainError):
        classify_point(5.0, -1.0, 2.0, 16.0)


def test_enumerate_regions_structure():
    regs = enumerate_regions(2.0, 64.0)
    kinds = {k: sum(r.kind == k for r in regs) for k in RegionKind}
    assert kinds[RegionKind.OUTER] == len(time_blocks(64.0))
    for r in regs:
        if r.kind != RegionKind.OUTER:
            assert r.value <= top_dyadic(2.0, r.tau)
    with pytest.raises(ParameterError):
        enumerate_regions(2.0, 6.0)
    with pytest.raises(ParameterError):
        enumerate_regions(0.5, 16.0)


@given(speeds, horizons)
def test_label_points_agrees_with_classify(c, T):
    t = np.linspace(4.0, T, 23)
    r = np.linspace(0.0, c * T, 31)
    lab = label_points(t, r, c, T)
    for i in range(0, t.size, 4):
        for j in range(0, r.size, 5):
            reg = classify_point(t[i], r[j], c, T)
            k = lab.labels[i, j]
            if reg is None:
                assert k == -1
            else:
                assert lab.regions[k].key == reg.key


def test_region_json_roundtrip_fields():
    reg = DyadicRegion(2.0, 8.0, RegionKind.UC_BAND, 2.0, 32.0)
    js = reg.to_json()
    assert js["kind"] == "Uc" and js["bounds"]["r_or_uc"] == [2.0, 4.0]
    assert reg.enlarged().to_json()["enlargement"] == 1.5
