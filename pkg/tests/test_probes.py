import json

import numpy as np
import pytest

from momentforge import probes
from momentforge.hypotheses import HypothesisError
from momentforge.oracle import OracleConfig
from momentforge.poly import Polynomial, build_ux
from momentforge.probes import (
    CSV_COLUMNS,
    ExactnessReport,
    counterexample_xy,
    onedim_probe,
    optimization_sweep,
    set_exactness_sweep,
    squeeze_check,
)

from conftest import P, X1, XY, parse_system

INTERVAL = parse_system(["1-x^2"], X1)
CFG1 = OracleConfig.cube(1, 1.5)
CFG2 = OracleConfig.cube(2, 1.5)


def _check_report_invariants(rep: ExactnessReport):
    assert rep.consistent
    assert [r.d for r in rep.rows] == sorted(r.d for r in rep.rows)
    gaps = [r.gap for r in rep.rows]
    assert all(b <= a + 1e-6 for a, b in zip(gaps, gaps[1:]))


def test_optimization_interior_quadratic():
    rep = optimization_sweep(P("(x-0.3)^2", X1), INTERVAL, 2, 6, 1e-6, oracle_cfg=CFG1, names=X1)
    assert rep.first_exact_d == 2
    assert rep.rows[0].oracle == pytest.approx(0.0, abs=1e-12)
    hyp = rep.hypotheses
    assert hyp["archimedean"]["status"] == "Found"
    assert hyp["minimizers"][0]["hessian_pd"] and hyp["minimizers"][0]["interior"]
    assert hyp["all_green"]
    _check_report_invariants(rep)
    # exactness persists two degrees later
    assert all(abs(r.gap) <= 1e-6 for r in rep.rows if r.d >= rep.first_exact_d)


def test_optimization_constant():
    rep = optimization_sweep(Polynomial.constant(1, 3.0), INTERVAL, 0, 4, oracle_cfg=CFG1)
    assert rep.first_exact_d == 0 and rep.rows[0].gap == 0.0


def test_optimization_two_interior_minimizers():
    f = P("(x^2-0.25)^2*(y^2+1)")
    rep = optimization_sweep(f, parse_system(["1-x^2-y^2"], XY), 6, 10, oracle_cfg=CFG2, names=XY)
    assert rep.first_exact_d is not None
    mins = sorted(m["point"][0] for m in rep.hypotheses["minimizers"])
    assert mins == pytest.approx([-0.5, 0.5], abs=1e-6)
    _check_report_invariants(rep)


def test_optimization_vacuous_and_bad_range():
    rep = optimization_sweep(P("x", X1), parse_system(["-1-x^2"], X1), 2, 4, oracle_cfg=CFG1)
    assert rep.vacuous and rep.rows == []
    with pytest.raises(ValueError):
        optimization_sweep(P("x^4", X1), INTERVAL, 2, 6, oracle_cfg=CFG1)


def test_set_sweep_unit_disk():
    rep = set_exactness_sweep(parse_system(["1-x^2-y^2"], XY), d_max=4, n_dirs=16, oracle_cfg=CFG2, names=XY)
    assert rep.first_exact_d == 2
    assert rep.instance["n_dirs"] == 16
    assert rep.hypotheses["all_green"]
    _check_report_invariants(rep)


def test_set_sweep_lens(disks):
    rep = set_exactness_sweep(disks, d_max=4, n_dirs=16, oracle_cfg=OracleConfig.cube(2, 2.0), names=XY)
    assert rep.first_exact_d is not None
    assert all(q["verdict"] != "Fails" for q in rep.hypotheses["quasiconcavity"])
    assert rep.hypotheses["all_green"]


def test_onedim_never_closes():
    rep = onedim_probe()
    assert rep.first_exact_d is None
    minus_x = next(r for r in rep.directions if r["direction"] == [-1.0])
    assert minus_x["closed_at"] is None
    assert all(g > 1e-9 for g in minus_x["gaps"])
    assert [r.d for r in rep.rows] == [4, 6, 8, 10]
    points = [p["point"] for p in rep.hypotheses["atlas"]["points"]]
    probe = dict(zip(map(tuple, points), rep.hypotheses["interior_probe"]["results"]))
    assert probe[(2.0,)] is False and probe[(0.0,)] is True
    assert not rep.hypotheses["all_green"]
    _check_report_invariants(rep)


def test_squeeze_examples():
    cfg = OracleConfig.cube(1, 1.0)
    u = build_ux([[0.3]], 1)
    rep = squeeze_check(u, INTERVAL, [[0.3]], 0.1, cfg)
    assert rep.side_a and rep.side_b and rep.agree
    assert rep.epsilon == pytest.approx(1.0, abs=1e-9)
    rep = squeeze_check(P("x^4", X1), INTERVAL, [[0.0]], 0.1, cfg)
    assert not rep.side_a and not rep.side_b and rep.agree
    rep = squeeze_check(P("(x^2-1)^2", X1), parse_system(["4-x^2"], X1), [[-1.0], [1.0]], 0.1, OracleConfig.cube(1, 2.0))
    assert rep.side_a and rep.side_b and rep.agree
    with pytest.raises(HypothesisError):
        squeeze_check(P("x^2+1", X1), INTERVAL, [[0.0]], 0.1, cfg)


def test_counterexample_report():
    rep = counterexample_xy()
    assert rep["ok"]
    assert rep["hessian_state"] == -2.0
    assert rep["oracle_min"] == pytest.approx(0.0, abs=1e-6)
    assert np.allclose(rep["oracle_minimizers"][0], [0.0, 0.0], atol=1e-6)
    assert [r["d"] for r in rep["membership"]] == [2, 4, 6, 8]
    assert all(r["verdict"] == "NotMember" and r["margin"] < 0 for r in rep["membership"])
    assert rep["double_zero"]


def test_report_round_trip_and_csv():
    rep = optimization_sweep(P("(x-0.3)^2", X1), INTERVAL, 2, 4, oracle_cfg=CFG1, names=X1)
    text = rep.dumps()
    back = ExactnessReport.from_json(json.loads(text))
    assert back == rep
    assert back.dumps() == text
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 1 + len(rep.rows)


def test_round_trip_with_infinities():
    rep = optimization_sweep(P("x", X1), parse_system(["1-x^2", "x^4 + 2"], X1), 2, 2, oracle_cfg=CFG1)
    rep.rows[0].value = float("inf")
    back = ExactnessReport.from_json(json.loads(rep.dumps()))
    assert back.rows[0].value == float("inf") and back == rep


def test_threads_do_not_change_results(monkeypatch):
    f, g = P("(x^2-0.25)^2", X1), INTERVAL
    monkeypatch.setenv("MOMENTFORGE_THREADS", "1")
    serial = optimization_sweep(f, g, 4, 8, oracle_cfg=CFG1).dumps()
    monkeypatch.setenv("MOMENTFORGE_THREADS", "3")
    assert probes.max_threads() == 3
    assert optimization_sweep(f, g, 4, 8, oracle_cfg=CFG1).dumps() == serial
    monkeypatch.setenv("MOMENTFORGE_THREADS", "junk")
    assert probes.max_threads() == 1


def test_odd_degrees_optional():
    rep = optimization_sweep(P("(x-0.3)^2", X1), INTERVAL, 2, 4, oracle_cfg=CFG1, include_odd=True)
    assert [r.d for r in rep.rows] == [2, 3, 4]
