"""Command-line entry point: ``fracflow {run,verify,convergence,kernels}``.

Exit codes: 0 success, 1 a certificate failed, 2 configuration error,
3 solver failure.  Errors are reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, config_hash, load_config
from .convex import Energy, ProxError
from .io import (read_trajectory_csv, write_csv, write_json, write_snapshots_csv,
                 write_trajectory_csv)
from .kernels import (KernelPair, TimeGrid, cell_weights, mittag_leffler, pc_identity_errors)
from .plaplace import MovingDomain, PLaplaceEnergy, SpatialGrid, profile, run_cdp
from .stepper import FlowConfig, FlowError, Trajectory, solve_flow
from .verify import (ab_estimate_certificate, chain_rule_certificate, energy_certificate,
                     td_chain_rule_report, Certificate)
from .volterra import FixedPointError, StepSizeError

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
SOLVER_ERRORS = (FlowError, ProxError, StepSizeError, FixedPointError, FloatingPointError)


@dataclass
class Run:
    traj: Trajectory
    pair: KernelPair
    grid: TimeGrid
    energy: Energy
    flow: FlowConfig
    extra: dict


def simulate(cfg: RunConfig, N: Optional[int] = None) -> Run:
    if cfg.problem == "cdp":
        res = run_cdp(cfg.cdp(N))
        extra = {"sup_energy": res.sup_energy, "derivative_bound": res.derivative_bound,
                 "x": res.grid.x}
        return Run(res.trajectory, res.flow.pair, res.flow.grid, res.energy, res.flow, extra)
    pair, grid, energy = cfg.pair(), cfg.grid(N), cfg.flat_energy()
    flow = FlowConfig(pair, grid, energy, cfg.flat_u0(), cfg.flat_f(), cfg.nu,
                      residual_tol=cfg.residual_tol, prox_tol=cfg.prox_tol)
    return Run(solve_flow(flow), pair, grid, energy, flow, {})


def threads() -> int:
    try:
        return max(1, int(os.environ.get("FRACFLOW_THREADS", "1")))
    except ValueError:
        return 1


# -- commands -------------------------------------------------------------

def cmd_run(cfg: RunConfig, out: Path, quiet: bool) -> int:
    h = config_hash(cfg)
    start = time.perf_counter()
    run = simulate(cfg)
    wall = time.perf_counter() - start
    traj = run.traj
    write_trajectory_csv(out / "trajectory.csv", traj, cfg.probes, h)
    final = traj.u[-1]
    summary = {
        "config": cfg.model_dump(mode="json"),
        "config_hash": h,
        "max_residual": traj.max_residual,
        "final_energy": float(traj.energy[-1]),
        "final_u": float(final[0]) if final.size == 1 else final,
        "N": traj.N,
    }
    if cfg.problem == "cdp":
        summary["sup_energy"] = run.extra["sup_energy"]
        summary["derivative_bound"] = run.extra["derivative_bound"]
        times = cfg.snapshots or [0.0, cfg.T]
        write_snapshots_csv(out / "snapshots.csv", traj.t, run.extra["x"], traj.u, times, h)
    write_json(out / "summary.json", summary)
    # timing lives apart so that summary.json stays byte-deterministic
    write_json(out / "timing.json", {"config_hash": h, "wall_time": wall})
    if not quiet:
        print(json.dumps({"status": "ok", "final_energy": summary["final_energy"],
                          "max_residual": summary["max_residual"], "out": str(out)}))
    return EXIT_OK


def _write_certificate(out: Path, cert: Certificate, t, h: str):
    cert.to_json(out / f"cert_{cert.name}.json", {"config_hash": h})
    cert.to_csv(out / f"cert_{cert.name}.csv", t, f"config_hash: {h}")


def _td_certificate(run: Run, fine: Optional[Run]) -> Certificate:
    rep = td_chain_rule_report(run.traj, run.pair, run.grid, run.energy)
    details = {"C": rep["C"], "finite": rep["finite"]}
    ok = rep["finite"]
    if fine is not None:
        rep2 = td_chain_rule_report(fine.traj, fine.pair, fine.grid, fine.energy)
        details["C_refined"] = rep2["C"]
        lo, hi = sorted((rep["C"], rep2["C"]))
        ok = ok and rep2["finite"] and (hi == 0 or (lo > 0 and hi / lo <= 2.0))
    details["stable"] = ok
    return Certificate("td_chain_rule", np.array([1.0 if ok else -1.0]), 0.0, details)


def certificate_suite(run: Run, fine: Optional[Run] = None):
    certs = []
    if run.energy.autonomous and run.traj.nu == 0:
        certs.append(chain_rule_certificate(run.traj, run.pair, run.grid, run.energy))
    shifted = run.traj.u - run.traj.u[0]
    certs.append(ab_estimate_certificate(shifted, run.pair, run.grid, run.traj.weight))
    refined = (fine.traj, fine.grid) if fine is not None else None
    certs.append(energy_certificate(run.traj, run.pair, run.grid, refined)[1])
    if run.energy.shift_map is not None:
        certs.append(_td_certificate(run, fine))
    return certs


def _offline_run(cfg: RunConfig, path) -> Run:
    """Rebuild a trajectory from CSV; ``D`` from the weights, ``xi`` from the equation."""
    t, u, _, header = read_trajectory_csv(path)
    N = len(t) - 1
    grid = cfg.grid(N)
    if N < 1 or not np.allclose(t, grid.nodes, rtol=0, atol=1e-12 * max(1.0, cfg.T)):
        raise ConfigError(f"trajectory times do not match a uniform grid on [0, {cfg.T}]", ["T"])
    if cfg.problem == "cdp":
        energy = PLaplaceEnergy(cfg.p, cfg.domain(), SpatialGrid(cfg.d), tol=cfg.prox_tol)
        shape = profile(cfg.f, MovingDomain.full(), energy.grid, cfg.f_amplitude)
        f = np.broadcast_to(shape, (N + 1, cfg.d)).copy()
    else:
        energy = cfg.flat_energy()
        f = np.full((N + 1, cfg.d), cfg.flat_f())
    if u.shape[1] != energy.dim:
        raise ConfigError(f"offline verify needs the full state ({energy.dim} columns), "
                          f"found {u.shape[1]}", ["probes"])
    pair = cfg.pair()
    kappa = cell_weights(pair, grid, "k").values
    inc = np.diff(u, axis=0)
    D = np.zeros_like(u)
    for n in range(1, N + 1):
        D[n] = kappa[n - 1::-1] @ inc[:n]
    xi = np.zeros_like(u)
    xi[1:] = f[1:] - D[1:] - (cfg.nu / grid.tau) * inc
    energies = np.array([energy.value(tn, un) for tn, un in zip(grid.nodes, u)])
    residual = np.zeros(N + 1)
    traj = Trajectory(grid.nodes, u, xi, D, energies, residual, cfg.nu, energy.weight)
    flow = FlowConfig(pair, grid, energy, u[0], f, cfg.nu)
    return Run(traj, pair, grid, energy, flow, {})


def cmd_verify(cfg: RunConfig, out: Path, quiet: bool, trajectory=None) -> int:
    h = config_hash(cfg)
    if trajectory is not None:
        run, fine = _offline_run(cfg, trajectory), None
    else:
        run, fine = simulate(cfg), simulate(cfg, 2 * cfg.N)
    certs = certificate_suite(run, fine)
    for cert in certs:
        _write_certificate(out, cert, run.grid.nodes if cert.slack.size == run.grid.N + 1 else None, h)
    ok = all(c.passed for c in certs)
    report = {"config_hash": h, "pass": ok, "offline": trajectory is not None,
              "certificates": {c.name: {"pass": c.passed, "min_slack": c.min_slack} for c in certs}}
    write_json(out / "verify.json", report)
    if not quiet:
        print(json.dumps(report, sort_keys=True))
    return EXIT_OK if ok else EXIT_CERT


def oracle(cfg: RunConfig, N: int):
    """Reference final state, or ``None`` when no closed form applies."""
    static_full = (cfg.a0 == 0.0 and cfg.b0 == 1.0 and cfg.A == 0.0 and cfg.B == 0.0)
    if cfg.nu != 0 or (cfg.f != "zero" and cfg.f_amplitude != 0):
        return None
    T = cfg.T
    if cfg.problem == "scalar_linear" or (cfg.problem == "custom_energy" and cfg.energy == "quadratic"):
        lam = cfg.c
        decay = math.exp(-lam * T) if cfg.kernel == "classical" else mittag_leffler(cfg.alpha, -lam * T ** cfg.alpha)
        return cfg.flat_u0() * decay
    if cfg.problem == "cdp" and cfg.p == 2 and static_full and cfg.u0 in ("sin", "zero"):
        grid = SpatialGrid(cfg.d)
        lam = 4.0 / grid.h ** 2 * math.sin(math.pi * grid.h / 2) ** 2
        decay = math.exp(-lam * T) if cfg.kernel == "classical" else mittag_leffler(cfg.alpha, -lam * T ** cfg.alpha)
        amp = cfg.u0_value if cfg.u0 == "sin" else 0.0
        return amp * np.sin(np.pi * grid.x) * decay
    return None


def _final_state(payload):
    cfg, N = payload
    run = simulate(cfg, N)
    return run.traj.u[-1], run.energy.weight


def cmd_convergence(cfg: RunConfig, out: Path, quiet: bool, levels: int) -> int:
    if levels < 2:
        raise ConfigError("--levels must be at least 2", ["levels"])
    h = config_hash(cfg)
    Ns = [cfg.N * 2 ** i for i in range(levels)]
    ref = oracle(cfg, Ns[-1])
    jobs = list(Ns) + ([Ns[-1] * 2] if ref is None else [])
    payloads = [(cfg, N) for N in jobs]
    if threads() > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads(), len(jobs))) as pool:
            results = list(pool.map(_final_state, payloads))
    else:
        results = [_final_state(p) for p in payloads]
    source = "closed_form"
    if ref is None:
        ref = results[-1][0]
        results = results[:-1]
        source = "self_reference"
    errors = [math.sqrt(max(w * float(np.sum((u - ref) ** 2)), 0.0)) for u, w in results]
    orders = [None] + [
        math.log2(errors[i - 1] / errors[i]) if errors[i] > 0 and errors[i - 1] > 0 else None
        for i in range(1, len(errors))
    ]
    rows = [[N, e, "" if o is None else o] for N, e, o in zip(Ns, errors, orders)]
    write_csv(out / "convergence.csv", ["N", "error", "order"], rows, h)
    write_json(out / "convergence.json", {"config_hash": h, "oracle": source, "N": Ns,
                                          "error": errors, "order": orders})
    if not quiet:
        for N, e, o in zip(Ns, errors, orders):
            print(f"N={N:6d}  error={e:.6e}  order={'-' if o is None else f'{o:.3f}'}")
    return EXIT_OK


def cmd_kernels(cfg: RunConfig, out: Path, quiet: bool) -> int:
    h = config_hash(cfg)
    pair, grid = cfg.pair(), cfg.grid()
    for which in ("k", "l"):
        w = cell_weights(pair, grid, which)
        write_csv(out / f"weights_{which}.csv", ["m", "kappa"], enumerate(w.values), h)
    info = {"config_hash": h, "kernel": pair.to_dict(), "N": grid.N, "T": grid.T,
            "K_T": float(pair.K(grid.T)), "L_T": float(pair.L(grid.T))}
    if pair.kind != "classical":
        err = pc_identity_errors(pair, grid)
        write_csv(out / "pc_identity.csv", ["n", "t", "error"],
                  ([n, grid.nodes[n], e] for n, e in enumerate(err, start=1)), h)
        info["pc_max_error"] = float(np.max(err))
        info["pc_final_error"] = float(err[-1])
    write_json(out / "kernels.json", info)
    if not quiet:
        print(json.dumps(info, sort_keys=True))
    return EXIT_OK


# -- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracflow",
                                     description="Time-fractional gradient flows: runs, certificates, studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory (default: output_dir from config)")
        p.add_argument("--quiet", action="store_true", help="suppress stdout summary")
        return p

    common(sub.add_parser("run", help="solve the configured problem"))
    v = common(sub.add_parser("verify", help="run the certificate suite"))
    v.add_argument("--trajectory", default=None, help="verify a saved trajectory CSV instead of solving")
    c = common(sub.add_parser("convergence", help="refinement study"))
    c.add_argument("--levels", type=int, default=3, help="number of grid levels (>= 2)")
    common(sub.add_parser("kernels", help="dump weights and identity errors"))
    return parser


def _fail(code: int, kind: str, message: str, out: Optional[Path] = None, **extra) -> int:
    payload = {"error": kind, "message": message, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out is not None and out.is_dir():
        write_json(out / "error.json", payload)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = None
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "run":
            return cmd_run(cfg, out, args.quiet)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.quiet, args.trajectory)
        if args.command == "convergence":
            return cmd_convergence(cfg, out, args.quiet, args.levels)
        return cmd_kernels(cfg, out, args.quiet)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config_error", str(exc), out, fields=exc.fields)
    except SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, "solver_failure", str(exc), out,
                     step=getattr(exc, "step", None))
    except (OSError, ValueError) as exc:
        return _fail(EXIT_CONFIG, "input_error", str(exc), out)


if __name__ == "__main__":
    sys.exit(main())
