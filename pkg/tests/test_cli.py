from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from twospeed import cli
from twospeed.cli import build_config, main

DATA = Path(__file__).parent / "data"
SMALL = ["--set", "t_end=8", "--set", "dx=0.125"]


def test_info(capsys):
    assert main(["info"]) == 0
    out = capsys.readouterr().out
    assert '"version"' in out and "[grid]" in out


def test_usage_errors(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "a")]) == 2  # epsilon missing
    assert main(["simulate", "--set", "bogus=1", "--out", str(tmp_path / "b")]) == 2
    assert main(["simulate", "--preset", "nope", "--out", str(tmp_path / "c")]) == 2
    assert main(["simulate", "--set", "epsilon=abc", "--out", str(tmp_path / "d")]) == 2
    assert main(["verify", "--set", "audit_family=", "--out", str(tmp_path / "e")]) == 2
    assert main(["info", "--threads", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_trivial_simulation_embeds_config(tmp_path):
    out = tmp_path / "z"
    assert main(["simulate", "--set", "epsilon=0", *SMALL, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["trivial"] and summary["max_abs_V"] == 0.0
    assert summary["config"]["epsilon"] == 0.0 and summary["version"]
    side = json.loads((out / "V.mswl.json").read_text())
    assert side["provenance"]["config"]["epsilon"] == 0.0


def test_golden_summary_is_byte_identical(tmp_path):
    out = tmp_path / "g"
    assert main(["simulate", "--preset", "golden-simulate", "--out", str(out)]) == 0
    assert (out / "summary.json").read_bytes() == (DATA / "golden_simulate_summary.json").read_bytes()


def test_blowup_is_success(tmp_path, capsys):
    assert main(["simulate", "--set", "epsilon=8", "--set", "family=pessimal", *SMALL,
                 "--out", str(tmp_path / "b")]) == 0
    assert "blowup at t=" in capsys.readouterr().out
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["blowup_time"] > 4


def test_resume_skips_matching_stage(tmp_path, capsys):
    args = ["simulate", "--set", "epsilon=0.1", *SMALL, "--out", str(tmp_path / "r")]
    assert main(args) == 0
    assert main([*args, "--resume"]) == 0
    assert "skipping" in capsys.readouterr().out
    assert main(["simulate", "--set", "epsilon=0.2", *SMALL, "--out", str(tmp_path / "r"), "--resume"]) == 0
    assert "skipping" not in capsys.readouterr().out


def test_config_files_ini_and_json(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[grid]\nt_end = 9\ndx = 0.125\n\n[data]\nepsilon = 0.25\nfamily = pessimal\n\n"
                   "[sweep]\nepsilons = 3, 2, 1\n")
    js = tmp_path / "run.json"
    js.write_text(json.dumps({"grid": {"t_end": 9, "dx": 0.125},
                              "data": {"epsilon": 0.25, "family": "pessimal"},
                              "sweep": {"epsilons": [3, 2, 1]}}))
    a, b = build_config(config_path=ini), build_config(config_path=js)
    assert a == b and a.epsilons == (3.0, 2.0, 1.0) and a.t_end == 9.0
    assert build_config(config_path=ini, overrides=["t_end=10"]).t_end == 10.0
    bad = tmp_path / "bad.ini"
    bad.write_text("[nowhere]\nx = 1\n")
    assert main(["info", "--config", str(bad)]) == 2
    # the effective config written back out parses to the same thing
    back = tmp_path / "back.ini"
    back.write_text(a.to_ini())
    assert build_config(config_path=back) == a


def test_threads_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli._threads(None) == 3
    assert cli._threads(2) == 2
    monkeypatch.setenv(cli.THREADS_ENV, "x")
    with pytest.raises(cli.ConfigurationError):
        cli._threads(None)


def test_iterate_and_mixed_k_refusal(tmp_path, capsys):
    base = ["iterate", "--set", "epsilon=0.3", *SMALL]
    assert main([*base, "--set", "j_max=1", "--out", str(tmp_path / "one")]) == 0
    led = json.loads((tmp_path / "one" / "ledger.json").read_text())
    assert len(led["rows"]) == 1 and led["contraction_ratios"] == []
    assert main([*base, "--set", "j_max=3", "--out", str(tmp_path / "three")]) == 0
    assert "A_j/A_j-1=" in capsys.readouterr().out
    prior = str(tmp_path / "three" / "ledger.json")
    assert main([*base, "--set", "j_max=3", "--set", "k_used=2", "--set", f"compare={prior}",
                 "--out", str(tmp_path / "k2")]) == 3
    assert main([*base, "--set", "j_max=3", "--set", f"compare={prior}", "--out", str(tmp_path / "same")]) == 0
    same = json.loads((tmp_path / "same" / "ledger.json").read_text())
    assert all(row["dA"] == 0.0 for row in same["compare"])


def test_verify_exit_codes(tmp_path, monkeypatch):
    quick = ["--set", "audit_dx=0.0625", "--set", "audit_family=free-w0.7"]
    assert main(["verify", *quick, "--set", "estimates=E13", "--set", "c=1", "--out", str(tmp_path / "r")]) == 3
    audit = json.loads((tmp_path / "r" / "audit.json").read_text())
    assert audit["refused"][0]["id"] == "E13"
    assert main(["verify", *quick, "--set", "estimates=E1,E12", "--out", str(tmp_path / "ok")]) == 0
    assert (tmp_path / "ok" / "audit.csv").exists()
    monkeypatch.setattr("twospeed.estimates.load_pins", lambda: {"E1": 1e-9})
    assert main(["verify", *quick, "--set", "estimates=E1", "--out", str(tmp_path / "v")]) == 4


def test_sweep_single_point_and_replay(tmp_path, capsys):
    out = tmp_path / "s"
    assert main(["sweep", "--set", "epsilons=8", "--set", "horizon=16", "--set", "sweep_dx=0.0625",
                 "--out", str(out)]) == 0
    assert "insufficient" in capsys.readouterr().out
    fit = json.loads((out / "fit.json").read_text())
    assert fit["fit"]["insufficient"] and fit["threshold_check"][0]["ok"]
    # replay synthetic records: the fit is reproduced exactly
    syn = tmp_path / "syn.csv"
    syn.write_text("epsilon,T_star,censored,threshold,nx,dt,confirmed\n"
                   + "".join(f"{e},{t!r},0,1.0,10,0.1,1\n" for e, t in
                             [(e, math.exp(3.0 / e**2)) for e in (1.0, 0.8, 0.6)]))
    assert main(["sweep", "--set", f"replay={syn}", "--out", str(tmp_path / "rp")]) == 0
    fit = json.loads((tmp_path / "rp" / "fit.json").read_text())["fit"]
    from twospeed.lifespan import fit_exp_law, read_sweep_csv
    assert fit == fit_exp_law(read_sweep_csv(syn)).to_json()
    assert fit["c_tilde"] == pytest.approx(3.0)


def test_regions(tmp_path):
    assert main(["regions", "--set", "t_end=64", "--out", str(tmp_path)]) == 0
    js = json.loads((tmp_path / "regions.json").read_text())
    assert js["count"] == len(js["regions"]) == 28
