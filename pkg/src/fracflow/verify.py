"""Numeric certificates for the inequalities satisfied by gradient-flow trajectories.

Every certificate is a pure function of its inputs and returns a per-node
slack array normalized so that ``slack >= 0`` means the inequality holds.
Convolutions with ``k`` or ``l`` use the same cell averages as the solver:

    (k * g)(t_n) ~ tau * sum_{m=1}^n kappa_{n-m} g_m.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .convex import Energy
from .kernels import KernelPair, TimeGrid, cell_convolution, cell_weights
from .stepper import Trajectory

__all__ = [
    "Certificate",
    "chain_rule_tolerance",
    "chain_rule_certificate",
    "quadratic_chain_rule_rhs",
    "ab_estimate_certificate",
    "energy_certificate",
    "energy_bounds",
    "td_chain_rule_report",
    "EPSILONS",
]

EPSILONS = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass
class Certificate:
    name: str
    slack: np.ndarray
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack)) if self.slack.size else 0.0

    @property
    def passed(self) -> bool:
        return bool(self.min_slack >= -self.tolerance)

    def to_dict(self) -> dict:
        out = {"name": self.name, "min_slack": self.min_slack,
               "tolerance": self.tolerance, "pass": self.passed}
        out.update({k: v for k, v in self.details.items() if _is_scalar(v)})
        return out

    def to_json(self, path, extra: Optional[dict] = None) -> None:
        payload = dict(extra or {})
        payload.update(self.to_dict())
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path, t=None, header_comment: Optional[str] = None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["n", "t", "slack"] if t is not None else ["n", "slack"])
            for n, s in enumerate(self.slack):
                row = [n] + ([repr(float(t[n]))] if t is not None else []) + [repr(float(s))]
                writer.writerow(row)


def _is_scalar(v):
    return isinstance(v, (bool, int, float, str)) or v is None


def chain_rule_tolerance(N: int, base: float = 0.05, N0: int = 256) -> float:
    """Discretization allowance: ``base`` at ``N0`` steps, halved per doubling."""
    return base * N0 / N


def _pair_inner(energy_weight, a, b):
    return energy_weight * np.einsum("ij,ij->i", a, b)


def chain_rule_certificate(traj: Trajectory, pair: KernelPair, grid: TimeGrid, energy: Energy,
                           tol: Optional[float] = None) -> Certificate:
    """Fractional chain rule ``int (d_t[k*(u-u0)], xi) >= k * (phi(u) - phi(u0))``."""
    if not energy.autonomous:
        raise ValueError("chain_rule_certificate needs an autonomous energy; "
                         "use td_chain_rule_report for time-dependent ones")
    if traj.nu != 0:
        raise ValueError("chain rule is certified for nu = 0 trajectories only")
    kappa = cell_weights(pair, grid, "k")
    dx = _pair_inner(traj.weight, traj.D, traj.xi)
    dx[0] = 0.0
    lhs = grid.tau * np.cumsum(dx)
    rhs = cell_convolution(kappa, traj.energy - traj.energy[0])
    tol = chain_rule_tolerance(grid.N) if tol is None else tol
    return Certificate("chain_rule", lhs - rhs, tol, {"lhs": lhs, "rhs": rhs, "N": grid.N})


def quadratic_chain_rule_rhs(traj: Trajectory, pair: KernelPair, grid: TimeGrid) -> np.ndarray:
    """``(1/2) [k * (|u|^2 - |u0|^2)](t_n)`` by explicit antiderivative differences."""
    t = grid.nodes
    sq = traj.weight * np.sum(traj.u * traj.u, axis=1)
    out = np.zeros(grid.N + 1)
    for n in range(1, grid.N + 1):
        acc = 0.0
        for m in range(1, n + 1):
            # cell (t_{n-m}, t_{n-m+1}) of k weighs the sample at t_m
            acc += (pair.K(t[n - m + 1]) - pair.K(t[n - m])) * (sq[m] - sq[0])
        out[n] = 0.5 * acc
    return out


def ab_estimate_certificate(u, pair: KernelPair, grid: TimeGrid, weight: float = 1.0,
                            tol: float = 0.05) -> Certificate:
    """``int (B u, u') >= (1/2) (l * |B u|^2)`` for histories with ``u_0 = 0``."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[0] != grid.N + 1:
        raise ValueError(f"need {grid.N + 1} node values, got {u.shape[0]}")
    if np.any(u[0] != 0.0):
        raise ValueError("the AB estimate applies to histories with u_0 = 0")
    kappa = cell_weights(pair, grid, "k").values
    inc = np.diff(u, axis=0)
    D = np.zeros_like(u)
    for n in range(1, grid.N + 1):
        D[n] = kappa[n - 1::-1] @ inc[:n]
    dv = np.zeros(grid.N + 1)
    dv[1:] = weight * np.einsum("ij,ij->i", D[1:], inc)
    lhs = np.cumsum(dv)
    dnorm = weight * np.sum(D * D, axis=1)
    rhs = 0.5 * cell_convolution(cell_weights(pair, grid, "l"), dnorm)
    return Certificate("ab_estimate", lhs - rhs, tol, {"lhs": lhs, "rhs": rhs, "N": grid.N})


def energy_bounds(traj: Trajectory, pair: KernelPair, grid: TimeGrid):
    """``(max_n (l * |D|^2)(t_n), max_n |phi^{t_n}(u_n)|)``."""
    dnorm = traj.weight * np.sum(traj.D * traj.D, axis=1)
    bound = float(np.max(cell_convolution(cell_weights(pair, grid, "l"), dnorm)))
    return bound, float(np.max(np.abs(traj.energy)))


def _stable(a, b, factor=2.0):
    if not (math.isfinite(a) and math.isfinite(b)):
        return False
    if a == 0 and b == 0:
        return True
    lo, hi = sorted((abs(a), abs(b)))
    return lo > 0 and hi / lo <= factor


def energy_certificate(traj: Trajectory, pair: KernelPair, grid: TimeGrid,
                       refined: Optional[tuple] = None, factor: float = 2.0):
    """Boundedness of ``l * |d_t[k*(u-u0)]|^2`` and of the energy along the run.

    ``refined`` optionally holds ``(traj2, grid2)`` on a finer grid; the
    certificate then also asks both quantities to agree within ``factor``.
    Returns ``(sup_bound, certificate)``; the slack is ``+1`` for each check
    that holds and ``-1`` otherwise.
    """
    bound, esup = energy_bounds(traj, pair, grid)
    checks = {"sup_bound_finite": math.isfinite(bound), "sup_energy_finite": math.isfinite(esup)}
    details = {"sup_bound": bound, "sup_energy": esup}
    if refined is not None:
        traj2, grid2 = refined
        bound2, esup2 = energy_bounds(traj2, pair, grid2)
        details.update(sup_bound_refined=bound2, sup_energy_refined=esup2)
        checks["sup_bound_stable"] = _stable(bound, bound2, factor)
        checks["sup_energy_stable"] = _stable(esup, esup2, factor)
    details.update(checks)
    slack = np.array([1.0 if ok else -1.0 for ok in checks.values()])
    return bound, Certificate("energy", slack, 0.0, details)


def td_chain_rule_report(traj: Trajectory, pair: KernelPair, grid: TimeGrid, energy: Energy,
                         epsilons=EPSILONS) -> dict:
    """Smallest constant in the nonlocal chain rule for time-dependent energies.

    For each ``eps`` and node ``n`` the inequality

        int (D, xi) >= k * phi(u) - phi(u0) K(t)
                       - eps C int |xi|^2 - (C / eps) [T (1 + |phi(u0)|) + int |phi(u)|]

    holds for every ``C >= C_n(eps)``; the report gives ``max_n C_n(eps)``
    and the overall maximum over ``eps``.
    """
    if energy.shift_map is None:
        raise ValueError(f"{type(energy).__name__} exposes no shift map")
    tau, T, t = grid.tau, grid.T, grid.nodes
    kappa = cell_weights(pair, grid, "k")
    dx = _pair_inner(traj.weight, traj.D, traj.xi)
    dx[0] = 0.0
    lhs = tau * np.cumsum(dx)
    phi = np.asarray(traj.energy, dtype=float)
    phi0 = phi[0]
    drive = cell_convolution(kappa, phi) - phi0 * pair.K(t)
    xi2 = traj.weight * np.sum(traj.xi * traj.xi, axis=1)
    xi2[0] = 0.0
    G = tau * np.cumsum(xi2)
    absphi = np.abs(phi)
    absphi[0] = 0.0
    P = T * (1.0 + abs(phi0)) + tau * np.cumsum(absphi)
    deficit = np.maximum(drive - lhs, 0.0)
    per_eps = {}
    for eps in epsilons:
        denom = eps * G + P / eps
        per_eps[eps] = float(np.max(deficit / denom))
    C = max(per_eps.values())
    return {"C": C, "per_epsilon": per_eps, "max_deficit": float(deficit.max()),
            "finite": math.isfinite(C), "N": grid.N}
