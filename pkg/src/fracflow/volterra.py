"""Linear Volterra equations of the second kind and Gronwall majorants.

Solves

    w(t) = g1(t) + int_0^t g2(s) w(s) ds + (g3 * w)(t)

on a uniform grid.  ``g3`` is always supplied as cell averages so that
singular kernels such as ``k_a`` enter through exact antiderivatives.  The
local integral uses the trapezoidal rule and the convolution uses product
integration with the node value on the right of each cell:

    w_n = g1_n + tau * sum_j c_j g2_j w_j + tau * sum_{j=1}^{n} g3_{n-j} w_j,

with ``c_0 = c_n = 1/2`` and ``c_j = 1`` otherwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .kernels import ConvWeights, TimeGrid

__all__ = [
    "VolterraProblem",
    "VolterraSolution",
    "StepSizeError",
    "FixedPointError",
    "solve_volterra",
    "contraction_factor",
    "gronwall_bound",
    "check_dominated",
    "write_solution_csv",
]


class StepSizeError(ArithmeticError):
    """The implicit coefficient of a march step vanished."""


class FixedPointError(RuntimeError):
    def __init__(self, message, factor):
        super().__init__(message)
        self.factor = factor


@dataclass
class VolterraProblem:
    grid: TimeGrid
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray

    def __post_init__(self):
        n_nodes = self.grid.N + 1
        self.g1 = np.asarray(self.g1, dtype=float)
        self.g2 = _broadcast_nodes(self.g2, n_nodes, "g2")
        g3 = self.g3.values if isinstance(self.g3, ConvWeights) else self.g3
        self.g3 = _broadcast_cells(g3, self.grid.N, "g3")
        if self.g1.ndim == 0:
            self.g1 = np.full(n_nodes, float(self.g1))
        if self.g1.shape[0] != n_nodes:
            raise ValueError(f"g1 needs {n_nodes} node samples, got {self.g1.shape[0]}")
        if not np.all(np.isfinite(self.g1)):
            raise ValueError("g1 has non-finite entries")


def _broadcast_nodes(arr, n, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} needs shape ({n},), got {arr.shape}")
    return arr


def _broadcast_cells(arr, n, name):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"{name} needs {n} cell averages, got {arr.shape}")
    return arr


@dataclass
class VolterraSolution:
    w: np.ndarray
    method: str
    iterations: int = 0
    beta: Optional[float] = None
    factor: Optional[float] = None


def _trap_weights(n: int) -> np.ndarray:
    c = np.ones(n + 1)
    c[0] = c[n] = 0.5
    return c


def _apply(problem: VolterraProblem, w: np.ndarray) -> np.ndarray:
    """One application of the discrete Picard map."""
    tau = problem.grid.tau
    g2, g3 = problem.g2, problem.g3
    out = problem.g1.copy()
    g2w = g2.reshape((-1,) + (1,) * (w.ndim - 1)) * w
    # trapezoid: tau * (cumsum - half of the endpoints)
    csum = np.cumsum(g2w, axis=0)
    local = tau * (csum - 0.5 * g2w - 0.5 * g2w[0])
    local[0] = 0.0
    out = out + local
    for n in range(1, problem.grid.N + 1):
        out[n] = out[n] + tau * np.tensordot(g3[n - 1::-1], w[1:n + 1], axes=(0, 0))
    return out


def _march(problem: VolterraProblem) -> np.ndarray:
    grid = problem.grid
    tau = grid.tau
    g1, g2, g3 = problem.g1, problem.g2, problem.g3
    w = np.empty_like(g1)
    w[0] = g1[0]
    # known part of the trapezoid sum: tau * (g2_0 w_0 / 2 + sum_{0<j<n} g2_j w_j)
    known = 0.5 * tau * g2[0] * w[0]
    for n in range(1, grid.N + 1):
        if n > 1:
            known = known + tau * g2[n - 1] * w[n - 1]
        hist = np.tensordot(g3[n - 1:0:-1], w[1:n], axes=(0, 0)) if n > 1 else 0.0
        coeff = 1.0 - 0.5 * tau * g2[n] - tau * g3[0]
        if abs(coeff) < 1e-12:
            raise StepSizeError(
                f"implicit coefficient {coeff:.3e} vanishes at step {n}; refine the grid"
            )
        w[n] = (g1[n] + known + tau * hist) / coeff
    return w


def contraction_factor(problem: VolterraProblem, beta: float) -> float:
    """Lipschitz constant of the discrete Picard map in the norm sup_n e^{-beta t_n}|w_n|."""
    tau = problem.grid.tau
    t = problem.grid.nodes
    g2 = np.abs(problem.g2)
    g3 = np.abs(problem.g3)
    N = problem.grid.N
    conv_part = tau * np.cumsum(g3 * np.exp(-beta * t[:N]))
    c = _trap_weights(N)
    best = 0.0
    for n in range(1, N + 1):
        weights = c[: n + 1].copy()
        weights[n] = 0.5
        loc = tau * np.sum(weights * g2[: n + 1] * np.exp(-beta * (t[n] - t[: n + 1])))
        best = max(best, loc + conv_part[n - 1])
    return float(best)


def _fixed_point(problem: VolterraProblem, beta: float, tol: float, max_iter: int):
    T = problem.grid.T
    factor = contraction_factor(problem, beta)
    while factor > 0.9:
        beta *= 2.0
        if beta * T > 60.0:
            raise FixedPointError(
                f"no admissible weight: contraction factor {factor:.3g} > 0.9", factor
            )
        factor = contraction_factor(problem, beta)
    weight = np.exp(-beta * problem.grid.nodes).reshape((-1,) + (1,) * (problem.g1.ndim - 1))
    w = problem.g1.copy()
    threshold = tol * math.exp(-beta * T)
    for it in range(1, max_iter + 1):
        new = _apply(problem, w)
        inc = float(np.max(np.abs((new - w) * weight)))
        w = new
        if inc <= threshold * max(1.0, float(np.max(np.abs(w)))):
            return VolterraSolution(w, "fixed_point", it, beta, factor)
    raise FixedPointError(
        f"Picard iteration stalled after {max_iter} sweeps (weighted increment {inc:.3e})",
        factor,
    )


def solve_volterra(problem: VolterraProblem, method: str = "march", beta: float = 1.0,
                   tol: float = 1e-12, max_iter: int = 200) -> VolterraSolution:
    """Solve the discrete Volterra equation.

    ``march`` is the direct implicit time march.  ``fixed_point`` iterates the
    Picard map in an exponentially weighted sup norm, doubling ``beta`` until
    the certified contraction factor drops to 0.9 or below.
    """
    if method == "march":
        return VolterraSolution(_march(problem), "march")
    if method == "fixed_point":
        if not beta > 0:
            raise ValueError("beta must be positive")
        return _fixed_point(problem, float(beta), tol, max_iter)
    raise ValueError(f"unknown method {method!r}")


def gronwall_bound(g1, g2, g3, grid: TimeGrid) -> np.ndarray:
    """Majorant ``G`` dominating every ``f`` with ``f <= g1 + int g2 f + g3 * f``."""
    problem = VolterraProblem(grid, g1, g2, g3)
    if np.any(problem.g2 < 0) or np.any(problem.g3 < 0):
        raise ValueError("Gronwall majorant requires nonnegative g2 and g3")
    return solve_volterra(problem, "march").w


def check_dominated(f, G, slack: float = 0.0) -> bool:
    f = np.asarray(f, dtype=float)
    G = np.asarray(G, dtype=float)
    if f.shape != G.shape:
        raise ValueError("f and G must share a grid")
    return bool(np.all(f <= G + slack))


def write_solution_csv(path, grid: TimeGrid, w, G=None) -> None:
    w = np.asarray(w, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "w"] + (["G"] if G is not None else []))
        for n, t in enumerate(grid.nodes):
            row = [repr(float(t)), repr(float(w[n]))]
            if G is not None:
                row.append(repr(float(G[n])))
            writer.writerow(row)
