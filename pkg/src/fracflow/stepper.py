"""Implicit convolution-quadrature solver for time-fractional gradient flows.

Discretizes

    d/dt [k * (u - u0)] + nu u' + d phi^t(u) \\ni f

with the L1-type sum ``D_n = sum_{j=1}^n kappa_{n-j} (u_j - u_{j-1})`` built
from cell averages of ``k``.  Every step is one resolvent evaluation:

    mu u_n + d phi^{t_n}(u_n) \\ni r_n,   mu = kappa_0 + nu / tau,

so ``u_n = J_{1/mu}^{t_n}(r_n / mu)`` and the selected subgradient is
``xi_n = r_n - mu u_n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .convex import Energy, ProxError, prox
from .kernels import ConvWeights, KernelPair, TimeGrid, cell_weights

__all__ = [
    "FlowConfig",
    "Trajectory",
    "FlowError",
    "discrete_nonlocal_derivative",
    "solve_flow",
    "continuous_dependence_check",
    "continuous_dependence_constant",
]


class FlowError(RuntimeError):
    """Failure inside :func:`solve_flow`; carries the step and partial trajectory."""

    def __init__(self, message, step=None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial


Forcing = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass
class FlowConfig:
    pair: KernelPair
    grid: TimeGrid
    energy: Energy
    u0: np.ndarray
    f: Forcing = None
    nu: float = 0.0
    residual_tol: float = 1e-10
    prox_tol: float = 1e-11

    def __post_init__(self):
        self.u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")

    def forcing(self) -> np.ndarray:
        """Node samples ``f_n = f(t_n)`` as an ``(N+1, d)`` array."""
        shape = (self.grid.N + 1, self.u0.size)
        if self.f is None:
            return np.zeros(shape)
        if callable(self.f):
            return np.array([np.broadcast_to(self.f(t), (shape[1],)) for t in self.grid.nodes],
                            dtype=float)
        arr = np.asarray(self.f, dtype=float)
        if arr.ndim == 0:
            return np.full(shape, float(arr))
        if arr.ndim == 1 and arr.shape[0] == shape[0] and shape[1] == 1:
            arr = arr[:, None]
        if arr.shape != shape:
            raise ValueError(f"forcing must have shape {shape}, got {arr.shape}")
        return arr


@dataclass
class Trajectory:
    """Discrete solution record on nodes ``t_0..t_N``.

    Row 0 of ``xi`` and ``D`` is zero padding; the scheme defines them for
    ``n >= 1`` only.
    """

    t: np.ndarray
    u: np.ndarray
    xi: np.ndarray
    D: np.ndarray
    energy: np.ndarray
    residual: np.ndarray
    nu: float = 0.0
    weight: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def max_residual(self) -> float:
        return float(self.residual[1:].max()) if self.N else 0.0


def discrete_nonlocal_derivative(weights, increments) -> np.ndarray:
    """``D_n = sum_{j=1}^n kappa_{n-j} (u_j - u_{j-1})`` for the last increment n.

    ``increments`` holds ``u_j - u_{j-1}`` for j = 1..n, one row each.
    """
    kappa = weights.values if isinstance(weights, ConvWeights) else np.asarray(weights)
    inc = np.asarray(increments, dtype=float)
    if inc.ndim == 1:
        inc = inc[:, None]
    n = inc.shape[0]
    if n < 1:
        raise ValueError("need at least one increment")
    return np.tensordot(kappa[n - 1::-1], inc, axes=(0, 0))


def solve_flow(config: FlowConfig) -> Trajectory:
    grid, energy = config.grid, config.energy
    N, tau = grid.N, grid.tau
    t = grid.nodes
    u0 = config.u0
    d = u0.size
    phi0 = energy.value(0.0, u0)
    if math.isinf(phi0) or math.isnan(phi0):
        raise FlowError("initial state lies outside the effective domain at t = 0", step=0)
    f = config.forcing()
    kappa = cell_weights(config.pair, grid, "k").values
    mu = kappa[0] + config.nu / tau

    u = np.zeros((N + 1, d))
    xi = np.zeros((N + 1, d))
    D = np.zeros((N + 1, d))
    inc = np.zeros((N + 1, d))
    energies = np.full(N + 1, np.nan)
    residual = np.zeros(N + 1)
    u[0] = u0
    energies[0] = phi0

    def partial(n):
        return Trajectory(t[:n], u[:n].copy(), xi[:n].copy(), D[:n].copy(),
                          energies[:n].copy(), residual[:n].copy(), config.nu, energy.weight)

    for n in range(1, N + 1):
        hist = kappa[n - 1:0:-1] @ inc[1:n] if n > 1 else np.zeros(d)
        r = f[n] + mu * u[n - 1] - hist
        try:
            w, _ = prox(energy, t[n], 1.0 / mu, r / mu)
        except ProxError as exc:
            raise FlowError(f"resolvent failed at step {n}: {exc}", step=n, partial=partial(n)) from exc
        u[n] = w
        inc[n] = w - u[n - 1]
        xi[n] = r - mu * w
        D[n] = kappa[0] * inc[n] + hist
        energies[n] = energy.value(t[n], w)
        res = D[n] + (config.nu / tau) * inc[n] + xi[n] - f[n]
        residual[n] = energy.norm(res)
        scale = 1.0 + energy.norm(f[n]) + energy.norm(xi[n]) + energy.norm(D[n])
        if not math.isfinite(energies[n]):
            raise FlowError(f"state left the effective domain at step {n}", step=n,
                            partial=partial(n + 1))
        if residual[n] > config.residual_tol * scale:
            raise FlowError(f"residual {residual[n]:.3e} exceeds tolerance at step {n}",
                            step=n, partial=partial(n + 1))

    return Trajectory(t, u, xi, D, energies, residual, config.nu, energy.weight,
                      {"kind": config.pair.kind, "alpha": config.pair.alpha, "N": N, "T": grid.T})


def continuous_dependence_constant(pair: KernelPair, T: float) -> float:
    """``max(4 ||l||_{L^1(0,T)}^2, 2T)``."""
    l1 = float(pair.L(T))
    return max(4.0 * l1 * l1, 2.0 * T)


def continuous_dependence_check(traj1: Trajectory, traj2: Trajectory,
                                config1: FlowConfig, config2: FlowConfig, slack: float = 0.1):
    """Compare ``tau sum ||u1 - u2||^2`` with the stability bound.

    Returns ``(lhs, rhs, ok)`` with ``ok = lhs <= (1 + slack) rhs``.
    """
    if (config1.grid != config2.grid or config1.pair != config2.pair
            or config1.energy is not config2.energy):
        raise ValueError("continuous dependence compares runs on a shared grid, kernel and energy")
    energy = config1.energy
    tau = config1.grid.tau
    du = traj1.u[1:] - traj2.u[1:]
    df = config1.forcing()[1:] - config2.forcing()[1:]
    lhs = tau * sum(energy.inner(r, r) for r in du)
    du0 = config1.u0 - config2.u0
    rhs = continuous_dependence_constant(config1.pair, config1.grid.T) * (
        energy.inner(du0, du0) + tau * sum(energy.inner(r, r) for r in df))
    return float(lhs), float(rhs), bool(lhs <= rhs * (1.0 + slack))
