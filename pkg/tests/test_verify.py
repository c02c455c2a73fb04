import json

import numpy as np
import pytest

from fracflow.convex import QuadraticEnergy
from fracflow.kernels import TimeGrid, classical_pair, rl_pair
from fracflow.plaplace import CDPConfig, run_cdp
from fracflow.stepper import FlowConfig, solve_flow
from fracflow.verify import (Certificate, ab_estimate_certificate, chain_rule_certificate,
                             chain_rule_tolerance, energy_certificate, quadratic_chain_rule_rhs,
                             td_chain_rule_report)


def scalar_run(N, u0=1.0, pair=None, nu=0.0):
    pair = pair or rl_pair(0.5)
    grid = TimeGrid(1.0, N)
    energy = QuadraticEnergy()
    return solve_flow(FlowConfig(pair, grid, energy, [u0], nu=nu)), pair, grid, energy


def test_certificate_pass_rule(tmp_path):
    c = Certificate("x", np.array([0.0, -0.01, 0.2]), 0.02)
    assert c.min_slack == -0.01 and c.passed
    assert not Certificate("x", np.array([-0.03]), 0.02).passed
    c.to_json(tmp_path / "c.json", {"config_hash": "abc"})
    data = json.loads((tmp_path / "c.json").read_text())
    assert data == {"name": "x", "min_slack": -0.01, "tolerance": 0.02, "pass": True, "config_hash": "abc"}
    c.to_csv(tmp_path / "c.csv", t=[0.0, 0.5, 1.0])
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "n,t,slack"


def test_tolerance_schedule():
    assert chain_rule_tolerance(256) == 0.05
    assert chain_rule_tolerance(1024) == 0.0125


def test_chain_rule_stationary_zero_slack():
    traj, pair, grid, e = scalar_run(64, u0=0.0)
    assert np.all(chain_rule_certificate(traj, pair, grid, e).slack == 0)


def test_chain_rule_quadratic_cross_check():
    traj, pair, grid, e = scalar_run(256)
    cert = chain_rule_certificate(traj, pair, grid, e)
    assert np.max(np.abs(quadratic_chain_rule_rhs(traj, pair, grid) - cert.details["rhs"])) <= 1e-10


def test_chain_rule_refinement():
    mins = [chain_rule_certificate(*scalar_run(N)).min_slack for N in (256, 512, 1024)]
    assert mins[0] >= -0.05
    assert mins[0] <= mins[1] <= mins[2]


def test_chain_rule_slack_nonnegative_at_every_node():
    traj, pair, grid, e = scalar_run(128)
    assert np.all(chain_rule_certificate(traj, pair, grid, e).slack >= -1e-14)


def test_chain_rule_preconditions():
    traj, pair, grid, e = scalar_run(16, nu=0.1)
    with pytest.raises(ValueError, match="nu"):
        chain_rule_certificate(traj, pair, grid, e)
    res = run_cdp(CDPConfig(alpha=0.5, p=3, N=8, d=16, a0=0.2, b0=0.8, A=0.05, B=-0.05, omega=6.0, u0="bump"))
    with pytest.raises(ValueError, match="autonomous"):
        chain_rule_certificate(res.trajectory, res.flow.pair, res.flow.grid, res.energy)


def test_ab_estimate():
    grid = TimeGrid(1.0, 128)
    assert np.all(ab_estimate_certificate(np.zeros(129), rl_pair(0.3), grid).slack == 0)
    u = np.sin(3 * grid.nodes)
    cert = ab_estimate_certificate(u, classical_pair(), grid)
    v = np.diff(u) / grid.tau
    expected = 0.5 * grid.tau * np.concatenate(([0.0], np.cumsum(v ** 2)))
    assert np.allclose(cert.slack, expected, rtol=1e-10, atol=1e-12)
    with pytest.raises(ValueError):
        ab_estimate_certificate(u + 1.0, rl_pair(0.3), grid)


def test_energy_certificate():
    traj, pair, grid, e = scalar_run(32, u0=0.0)
    bound, cert = energy_certificate(traj, pair, grid)
    assert bound == 0.0 and cert.passed
    t1, *_ = scalar_run(512)
    t2, _, g2, _ = scalar_run(1024)
    bound, cert = energy_certificate(t1, pair, TimeGrid(1.0, 512), refined=(t2, g2))
    assert np.isfinite(bound) and bound > 0
    assert cert.passed and cert.details["sup_bound_stable"]


def test_td_report_autonomous_vs_static():
    traj, pair, grid, e = scalar_run(128)
    rep = td_chain_rule_report(traj, pair, grid, e)
    assert rep["finite"] and rep["C"] == 0.0 and len(rep["per_epsilon"]) == 9
    base = dict(alpha=0.5, p=3, N=64, d=32, a0=0.2, b0=0.8, u0="bump", f="bump", f_amplitude=1.0)
    a = run_cdp(CDPConfig(**base))
    b = run_cdp(CDPConfig(omega=2 * np.pi, **base))
    ra = td_chain_rule_report(a.trajectory, a.flow.pair, a.flow.grid, a.energy)
    rb = td_chain_rule_report(b.trajectory, b.flow.pair, b.flow.grid, b.energy)
    assert abs(ra["C"] - rb["C"]) <= 1e-8


def test_td_report_moving_domain_is_finite_and_stable():
    base = dict(alpha=0.5, p=3, d=64, a0=0.2, b0=0.8, A=0.02, B=-0.02, omega=2 * np.pi,
                u0="bump", f="bump", f_amplitude=1.0)
    Cs = []
    for N in (256, 512):
        r = run_cdp(CDPConfig(N=N, **base))
        rep = td_chain_rule_report(r.trajectory, r.flow.pair, r.flow.grid, r.energy)
        assert rep["finite"]
        Cs.append(rep["C"])
    lo, hi = sorted(Cs)
    assert hi == 0.0 or hi / lo <= 2.0


def test_td_report_detects_deficit():
    # inflated subgradients push int (D, xi) below the energy drive
    traj, pair, grid, e = scalar_run(64)
    traj.xi[1:] *= 3.0
    rep = td_chain_rule_report(traj, pair, grid, e)
    assert rep["C"] > 0 and rep["max_deficit"] > 0


def test_certificates_are_pure():
    traj, pair, grid, e = scalar_run(64)
    before = traj.u.copy()
    a = chain_rule_certificate(traj, pair, grid, e).slack
    b = chain_rule_certificate(traj, pair, grid, e).slack
    assert np.array_equal(a, b) and np.array_equal(traj.u, before)
