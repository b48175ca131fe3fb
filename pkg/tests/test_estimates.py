from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twospeed.errors import ParameterError, RefusedError
from twospeed.estimates import (DEFAULT_FAMILY, IDS, REGISTRY, AuditConfig, AuditTable, EstimateReport,
                                audit_family, check_estimate, load_pins, pin_violations, speed_gap_scan,
                                support_ok)
from twospeed.geometry import Grid

GRID = Grid.for_problem(16.0, c=2.0, dx=1 / 16)


@pytest.fixture(scope="module")
def free_pair():
    return AuditConfig("free", "free", width=0.7).build(GRID, 2.0)


def test_registry_has_thirteen_entries():
    assert IDS == tuple(f"E{i}" for i in range(1, 14))
    assert all(REGISTRY[i].statement for i in IDS)
    assert {i for i in IDS if REGISTRY[i].uses_p} == {"E9", "E10"}


@pytest.mark.parametrize("eid", IDS)
def test_every_entry_gives_a_finite_ratio(free_pair, eid):
    rep = check_estimate(eid, free_pair, {"c": 2.0, "p": 1})
    assert rep.ratio is not None and np.isfinite(rep.ratio) and rep.ratio >= 0
    assert rep.rhs > 0 and not rep.degenerate


@settings(max_examples=6)
@given(st.floats(0.05, 20.0), st.sampled_from(["E1", "E4", "E6", "E9", "E11", "E12"]))
def test_ratios_do_not_depend_on_amplitude(amp, eid):
    base = AuditConfig("a", "free", width=0.7)
    r1 = check_estimate(eid, base.build(GRID, 2.0), {"c": 2.0}).ratio
    scaled = AuditConfig("b", "free", width=0.7, amplitude=amp)
    r2 = check_estimate(eid, scaled.build(GRID, 2.0), {"c": 2.0}).ratio
    assert r2 == pytest.approx(r1, rel=1e-9)


def test_zero_solution_is_degenerate():
    pair = AuditConfig("z", "zero").build(GRID, 2.0)
    rep = check_estimate("E12", pair, {"c": 2.0})
    assert rep.degenerate and rep.ratio is None


def test_speed_gap_entry_refuses_equal_speeds():
    g = Grid.for_problem(16.0, c=1.0, dx=1 / 16)
    pair = AuditConfig("f", "free", width=0.7).build(g, 1.0)
    with pytest.raises(RefusedError, match="c > 1"):
        check_estimate("E13", pair, {"c": 1.0})


def test_support_reaching_the_edge_is_refused(free_pair):
    V, W = free_pair
    bad = V.with_samples(np.ones_like(V.samples), c=1.0)
    bad.samples[:, : bad.grid.nx // 2] *= -1
    assert not support_ok(bad)
    with pytest.raises(RefusedError, match="domain edge"):
        check_estimate("E5", (bad, W), {"c": 2.0})


def test_unknown_id_and_bad_p(free_pair):
    with pytest.raises(ParameterError):
        check_estimate("E99", free_pair)
    with pytest.raises(RefusedError):
        check_estimate("E9", free_pair, {"p": -1})


def test_forcing_sources_agree_on_free_solution(free_pair):
    a = check_estimate("E11", free_pair, {"c": 2.0, "forcing": "recorded"}).ratio
    b = check_estimate("E11", free_pair, {"c": 2.0, "forcing": "auto"}).ratio
    assert a == b


def test_small_audit_and_tables():
    fam = [AuditConfig("free-w0.7", "free", width=0.7), AuditConfig("zero", "zero")]
    table = audit_family(["E1", "E9", "E13"], fam, t_end=16.0, dx=1 / 16)
    worst = table.worst()
    assert set(worst) == {"E1", "E9:p=0", "E9:p=1", "E13"}
    csv_text = table.to_csv()
    assert csv_text.splitlines()[0].startswith("id,p,c,config,lhs,rhs,ratio")
    assert len(csv_text.splitlines()) == 1 + 2 * 4
    assert table.to_json()["worst"] == worst
    with pytest.raises(ParameterError):
        audit_family(["E1"], [])


def test_audit_records_refusals():
    table = audit_family(["E13"], [AuditConfig("free", "free", width=0.7)], c=1.0, t_end=16.0, dx=1 / 16)
    assert [r.id for r in table.refused()] == ["E13"]


def test_pins_cover_every_entry_and_flag_violations():
    pins = load_pins()
    assert set(pins) == {"E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8", "E9:p=0", "E9:p=1",
                         "E10:p=0", "E10:p=1", "E11", "E12", "E13"}
    table = AuditTable([EstimateReport("E1", 1.0, 1.0, 10.0 * pins["E1"]),
                        EstimateReport("E2", 1.0, 1.0, 0.5 * pins["E2"])])
    assert set(pin_violations(table)) == {"E1"}


def test_default_family_shape():
    assert len(DEFAULT_FAMILY) >= 5
    assert {a.kind for a in DEFAULT_FAMILY} >= {"free", "drift", "coupled"}


def test_speed_gap_ratio_grows_as_speeds_merge():
    rows = speed_gap_scan(speeds=(1.0, 1.1, 1.5, 2.0), dx=1 / 16)
    assert rows[0]["refused"] and rows[0]["ratio"] is None
    ratios = [r["ratio"] for r in rows[1:]]
    assert ratios[0] > ratios[1] > ratios[2]
