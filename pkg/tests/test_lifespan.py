from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twospeed.errors import ParameterError
from twospeed.lifespan import (LifespanRecord, competing_law_test, consistency_corridor, fit_exp_law,
                               is_monotone, measurable_window, read_sweep_csv, run_point, sweep,
                               write_sweep)
from twospeed.system import DataFamily


def _recs(pairs):
    return [LifespanRecord(e, t, 1.0, 10, 0.1) for e, t in pairs]


def test_exact_exponential_law():
    eps = [1.0, 0.8, 0.6]
    fit = fit_exp_law([(e, math.exp(3 / e**2)) for e in eps])
    assert fit.c_tilde == pytest.approx(3.0, rel=1e-12) and fit.r_squared == pytest.approx(1.0)
    fit = fit_exp_law([(e, math.exp(3 / e**2 + 1)) for e in eps])
    assert fit.c_tilde == pytest.approx(3.0) and fit.intercept == pytest.approx(1.0)


@given(st.floats(0.5, 10.0), st.floats(-2.0, 2.0))
def test_fit_recovers_any_exact_law(c, b):
    eps = np.array([2.0, 1.6, 1.3, 1.1])
    fit = fit_exp_law([(e, math.exp(c / e**2 + b)) for e in eps])
    assert fit.c_tilde == pytest.approx(c, rel=1e-8) and fit.intercept == pytest.approx(b, abs=1e-8)


def test_competing_laws_pick_the_generator():
    eps = [1.0, 0.9, 0.8, 0.7, 0.6]
    assert competing_law_test([(e, math.exp(3 / e**2)) for e in eps]).winner == "exp_inv_eps2"
    assert competing_law_test([(e, e**-2.0) for e in eps]).winner == "power"
    assert competing_law_test([(e, math.exp(2 / e)) for e in eps]).winner == "exp_inv_eps"


def test_insufficient_data():
    fit = fit_exp_law([(1.0, 10.0), (0.9, None)])
    assert fit.insufficient and fit.censored_count == 1 and math.isnan(fit.c_tilde)
    assert fit.to_json()["c_tilde"] is None
    assert competing_law_test([(1.0, 10.0), (0.9, 20.0), (0.8, 40.0)]).insufficient
    assert consistency_corridor([(1.0, 10.0)])["vacuous"]


def test_monotonicity_check():
    assert is_monotone(_recs([(3.0, 5.0), (2.0, 9.0), (1.0, None)]))
    assert not is_monotone(_recs([(3.0, 9.0), (2.0, 5.0)]))
    assert not is_monotone(_recs([(3.0, 5.0), (2.0, 5.0)]))
    assert is_monotone(_recs([(3.0, 5.0), (2.0, 5.0)]), strict=False)


def test_corridor_brackets_points():
    pts = [(1.0, 10.0), (0.9, 14.0), (0.8, 25.0), (0.7, 70.0)]
    cor = consistency_corridor(pts)
    for e, t in pts:
        y = math.log(t) - cor["slope"] * e**-2
        assert cor["lower"] - 1e-12 <= y <= cor["upper"] + 1e-12


def test_record_invariant():
    with pytest.raises(ParameterError):
        LifespanRecord(1.0, 3.5, 1.0, 10, 0.1)


def test_sweep_validation():
    d = DataFamily("standard-bump", 1.0)
    with pytest.raises(ParameterError):
        sweep(d, epsilons=[1.0, 2.0])
    with pytest.raises(ParameterError):
        sweep(d, epsilons=[])
    with pytest.raises(ParameterError):
        sweep(d, epsilons=[1.0], horizon=4.0)


def test_uncoupled_sweep_survives():
    d = DataFamily("standard-bump", 1.0, nonlinear=False)
    recs = sweep(d, epsilons=[8.0, 4.0, 2.0], horizon=12.0, dx=1 / 16, early_exit=None)
    assert [r.survived for r in recs] == [True, True, True]
    assert fit_exp_law(recs).insufficient


def test_smaller_amplitude_lives_longer():
    d = DataFamily("standard-bump", 1.0)
    big = run_point(d.with_epsilon(10.0), 2.0, 64.0, 1 / 16, confirm=False)
    small = run_point(d.with_epsilon(5.0), 2.0, 64.0, 1 / 16, confirm=False)
    assert big.T_star is not None
    assert small.T_star is None or small.T_star > big.T_star


def test_sweep_is_deterministic_and_stops_early():
    d = DataFamily("standard-bump", 1.0)
    kw = dict(epsilons=[9.0, 8.0, 2.0, 1.5, 1.0], horizon=12.0, dx=1 / 16)
    a = sweep(d, **kw)
    b = sweep(d, **kw)
    assert [r.row() for r in a] == [r.row() for r in b]
    assert [r.epsilon for r in a] == [9.0, 8.0, 2.0, 1.5]
    assert all(r.refinement_confirmed for r in a if not r.survived)
    c = sweep(d, workers=2, **kw)
    assert [r.row() for r in c] == [r.row() for r in a]


def test_outputs_and_replay(tmp_path):
    recs = [LifespanRecord(e, t, 1e3, 100, 0.05, True if t else None)
            for e, t in [(8.0, 4.8), (6.0, 7.5), (5.0, 19.5), (4.0, 123.0), (3.0, None)]]
    paths = write_sweep(recs, tmp_path, {"note": "x"})
    assert paths["csv"].read_text().splitlines()[0] == "epsilon,T_star,censored,threshold,nx,dt,confirmed"
    summary = json.loads(paths["fit"].read_text())
    assert summary["config"] == {"note": "x"} and "version" in summary
    back = read_sweep_csv(paths["csv"])
    assert fit_exp_law(back) == fit_exp_law(recs)
    assert [r.T_star for r in back] == [r.T_star for r in recs]
    pairs = paths["pairs"].read_text().splitlines()
    assert pairs[0] == "inv_eps2,log_T_star" and len(pairs) == 5
    assert len(measurable_window(back)) == 4
