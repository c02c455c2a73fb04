"""Time-fractional p-Laplace subdiffusion on a moving interval.

The physical interval ``Omega_t = (a(t), b(t))`` sits inside ``U = (0, 1)``.
States live on the interior nodes ``x_i = i / (d + 1)`` of ``U`` and vanish
identically outside ``Omega_t`` (zero extension); the energy is

    phi_p^t(w) = (1/p) h sum_edges |(w_{i+1} - w_i) / h|^p

on that constraint set and ``+inf`` off it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

from .convex import Energy, ProxError
from .kernels import TimeGrid, cell_convolution, cell_weights, classical_pair, rl_pair
from .stepper import FlowConfig, FlowError, Trajectory, solve_flow

__all__ = [
    "MovingDomain",
    "SpatialGrid",
    "PLaplaceEnergy",
    "plaplace_energy",
    "plaplace_prox",
    "shift_map_psi",
    "CDPConfig",
    "CDPResult",
    "run_cdp",
    "profile",
    "smooth_state",
]

JACOBIAN_EPS = 1e-8


@dataclass(frozen=True)
class MovingDomain:
    """``a(t) = a0 + A sin(omega t)``, ``b(t) = b0 + B sin(omega t + phase)``.

    ``a0 = 0`` (resp. ``b0 = 1``) with zero amplitude selects a fixed endpoint
    on the boundary of ``U``; ``MovingDomain(0, 1)`` is the full interval.
    """

    a0: float
    b0: float
    A: float = 0.0
    B: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        lo_a, hi_a = self.a0 - abs(self.A), self.a0 + abs(self.A)
        lo_b, hi_b = self.b0 - abs(self.B), self.b0 + abs(self.B)
        left_ok = lo_a > 0 or (self.a0 == 0 and self.A == 0)
        right_ok = hi_b < 1 or (self.b0 == 1 and self.B == 0)
        if not (left_ok and right_ok and hi_a < lo_b):
            raise ValueError(
                "moving domain must satisfy 0 < a(t) < b(t) < 1 for all t "
                f"(a0={self.a0}, A={self.A}, b0={self.b0}, B={self.B})"
            )

    @classmethod
    def full(cls) -> "MovingDomain":
        return cls(0.0, 1.0)

    @property
    def static(self) -> bool:
        return (self.A == 0 and self.B == 0) or self.omega == 0

    def a(self, t):
        return self.a0 + self.A * np.sin(self.omega * np.asarray(t))

    def b(self, t):
        return self.b0 + self.B * np.sin(self.omega * np.asarray(t) + self.phase)

    def _map(self, t) -> PchipInterpolator:
        src = [0.0, self.a0, self.b0, 1.0]
        dst = [0.0, float(self.a(t)), float(self.b(t)), 1.0]
        keep = [0] + [i for i in (1, 2) if 0.0 < src[i] < 1.0] + [3]
        return PchipInterpolator([src[i] for i in keep], [dst[i] for i in keep])

    def theta(self, t, x):
        """Monotone C^1 map of ``[0, 1]`` with ``theta(t, Omega_0) = Omega_t``."""
        x = np.asarray(x, dtype=float)
        if self.static:
            return x.copy()
        return self._map(t)(x)

    def dtheta(self, t, x):
        x = np.asarray(x, dtype=float)
        if self.static:
            return np.ones_like(x)
        return self._map(t).derivative()(x)

    def theta_inv(self, t, y, tol=1e-12):
        """Inverse of ``theta(t, .)`` by vectorized bisection."""
        y = np.asarray(y, dtype=float)
        if self.static:
            return y.copy()
        f = self._map(t)
        lo = np.zeros_like(y)
        hi = np.ones_like(y)
        while np.max(hi - lo) > tol:
            mid = 0.5 * (lo + hi)
            below = f(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SpatialGrid:
    d: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("need at least one interior node")

    @property
    def h(self) -> float:
        return 1.0 / (self.d + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(1, self.d + 1) / (self.d + 1)

    def mask(self, domain: MovingDomain, t) -> np.ndarray:
        x = self.x
        return (domain.a(t) < x) & (x < domain.b(t))


def _flux(g, p):
    return np.abs(g) ** (p - 2.0) * g


def _edges(w, h):
    padded = np.concatenate(([0.0], w, [0.0]))
    return np.diff(padded) / h


def plaplace_energy(p, domain: MovingDomain, grid: SpatialGrid, t, w) -> float:
    w = np.asarray(w, dtype=float)
    mask = grid.mask(domain, t)
    if np.any(w[~mask] != 0.0):
        return math.inf
    g = _edges(w, grid.h)
    return float(grid.h / p * np.sum(np.abs(g) ** p))


def _objective(u, z, lam, h, p):
    g = _edges(u, h)
    return 0.5 / lam * np.sum((u - z) ** 2) + np.sum(np.abs(g) ** p) / p


def _gradient(u, z, lam, h, p):
    q = _flux(_edges(u, h), p)
    return (u - z) / lam + (q[:-1] - q[1:]) / h


def _newton_direction(u, grad, lam, h, p):
    g = _edges(u, h)
    if p == 2:
        c = np.ones_like(g)
    else:
        c = (p - 1.0) * (g * g + JACOBIAN_EPS ** 2) ** ((p - 2.0) / 2.0)
    c /= h * h
    m = u.size
    ab = np.zeros((3, m))
    ab[1] = 1.0 / lam + c[:-1] + c[1:]
    ab[0, 1:] = -c[1:-1]
    ab[2, :-1] = -c[1:-1]
    return solve_banded((1, 1), ab, -grad)


def plaplace_prox(p, domain: MovingDomain, grid: SpatialGrid, t, lam, z,
                  tol=1e-11, max_newton=50, max_iter=20000, x0=None):
    """Resolvent of the p-Laplace energy restricted to ``Omega_t``.

    Damped Newton on the active nodes with a tridiagonal Jacobian; only the
    Jacobian uses the regularized weight ``(g^2 + eps^2)^((p-2)/2)``.  If Newton
    has not converged after ``max_newton`` iterations the solver falls back to
    gradient descent with backtracking.

    Returns ``(w, xi)`` with ``xi = (z - w) / lam``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = np.asarray(z, dtype=float)
    h = grid.h
    mask = grid.mask(domain, t)
    w = np.zeros_like(z)
    idx = np.flatnonzero(mask)
    if idx.size:
        zz = z[idx]
        u = zz.copy() if x0 is None else np.asarray(x0, dtype=float)[idx].copy()
        target = tol * max(1.0, math.sqrt(h * np.sum(zz * zz)) / lam)
        u = _minimize(u, zz, lam, h, p, target, max_newton, max_iter)
        w[idx] = u
    return w, (z - w) / lam


def _minimize(u, z, lam, h, p, target, max_newton, max_iter):
    def gnorm(gr):
        return math.sqrt(h * np.sum(gr * gr))

    F = _objective(u, z, lam, h, p)
    grad = _gradient(u, z, lam, h, p)
    newton = True
    for it in range(max_iter):
        gn = gnorm(grad)
        if gn <= target:
            return u
        if newton and it >= max_newton:
            newton = False
        if newton:
            d = _newton_direction(u, grad, lam, h, p)
        else:
            d = -grad
        slope = float(np.dot(grad, d))
        if slope >= 0:
            d, slope = -grad, -float(np.dot(grad, grad))
        s = 1.0
        while True:
            trial = u + s * d
            F_trial = _objective(trial, z, lam, h, p)
            if F_trial <= F + 1e-4 * s * slope + 1e-15 * abs(F):
                break
            s *= 0.5
            if s < 1e-16:
                if newton:
                    newton = False
                    break
                raise ProxError(
                    f"p-Laplace resolvent line search failed (gradient norm {gn:.3e})", gn)
        if s < 1e-16:
            continue
        u, F = trial, F_trial
        grad = _gradient(u, z, lam, h, p)
    gn = gnorm(grad)
    if gn <= target:
        return u
    raise ProxError(f"p-Laplace resolvent did not converge (gradient norm {gn:.3e})", gn)


def shift_map_psi(domain: MovingDomain, grid: SpatialGrid, t, s, w) -> np.ndarray:
    """Transport ``w`` from time ``s`` to time ``t``: ``w(theta(s, theta^-1(t, x)))``.

    ``w`` is read as the piecewise-linear interpolant of its values on the
    nodes inside ``Omega_s``, pinned to zero at the exact endpoints
    ``a(s), b(s)`` and extended by zero.  Since ``theta(s, theta^-1(t, .))``
    maps ``Omega_t`` onto ``Omega_s`` the result vanishes on every node
    outside ``Omega_t``.
    """
    w = np.asarray(w, dtype=float)
    inside = grid.mask(domain, s)
    if t == s or domain.static:
        return np.where(inside, w, 0.0)
    x = grid.x
    y = domain.theta(s, domain.theta_inv(t, x))
    xs = np.concatenate(([float(domain.a(s))], x[inside], [float(domain.b(s))]))
    vals = np.concatenate(([0.0], w[inside], [0.0]))
    out = np.interp(y, xs, vals, left=0.0, right=0.0)
    return np.where(grid.mask(domain, t), out, 0.0)


class PLaplaceEnergy(Energy):
    def __init__(self, p, domain: MovingDomain, grid: SpatialGrid, tol=1e-11):
        if p < 2:
            raise ValueError("p must be at least 2")
        self.p = float(p)
        self.domain = domain
        self.grid = grid
        self.tol = tol
        self.dim = grid.d
        self.weight = grid.h
        self.autonomous = domain.static

    def value(self, t, w):
        return plaplace_energy(self.p, self.domain, self.grid, t, w)

    def resolvent(self, t, lam, z):
        return plaplace_prox(self.p, self.domain, self.grid, t, lam, z, tol=self.tol)[0]

    def shift_map(self, t, s, w):
        return shift_map_psi(self.domain, self.grid, t, s, w)

    def feasible_sample(self, t, rng, scale=1.0):
        return smooth_state(self.domain, self.grid, t, rng, scale=scale)


def profile(name, domain: MovingDomain, grid: SpatialGrid, value=1.0, t=0.0) -> np.ndarray:
    """Named spatial profile supported in ``Omega_t``: zero, sin, bump or constant."""
    x = grid.x
    a, b = float(domain.a(t)), float(domain.b(t))
    s = (x - a) / (b - a)
    inside = grid.mask(domain, t)
    if name == "zero":
        out = np.zeros_like(x)
    elif name == "sin":
        out = np.sin(np.pi * s)
    elif name == "bump":
        out = (4.0 * s * (1.0 - s)) ** 2
    elif name == "constant":
        out = np.ones_like(x)
    else:
        raise ValueError(f"unknown profile {name!r}")
    return np.where(inside, value * out, 0.0)


def smooth_state(domain: MovingDomain, grid: SpatialGrid, t, rng, modes=4, scale=1.0):
    """Random sine series on ``Omega_t`` with coefficients decaying like ``1/k^2``."""
    a, b = float(domain.a(t)), float(domain.b(t))
    y = (grid.x - a) / (b - a)
    k = np.arange(1, modes + 1)
    coef = scale * rng.standard_normal(modes) / k ** 2
    out = np.sin(np.pi * np.outer(y, k)) @ coef
    return np.where(grid.mask(domain, t), out, 0.0)


@dataclass
class CDPConfig:
    """Moving-domain p-Laplace problem.  ``alpha=None`` selects the classical kernel."""

    alpha: Optional[float] = 0.5
    p: float = 2.0
    T: float = 1.0
    N: int = 256
    d: int = 64
    a0: float = 0.0
    b0: float = 1.0
    A: float = 0.0
    B: float = 0.0
    omega: float = 0.0
    phase: float = 0.0
    u0: Union[str, np.ndarray] = "sin"
    u0_value: float = 1.0
    f: Union[str, np.ndarray] = "zero"
    f_amplitude: float = 0.0
    nu: float = 0.0
    prox_tol: float = 1e-11
    residual_tol: float = 1e-10

    def pair(self):
        return classical_pair() if self.alpha is None else rl_pair(self.alpha)

    def domain(self):
        return MovingDomain(self.a0, self.b0, self.A, self.B, self.omega, self.phase)


@dataclass
class CDPResult:
    trajectory: Trajectory
    config: CDPConfig
    domain: MovingDomain
    grid: SpatialGrid
    energy: PLaplaceEnergy
    flow: FlowConfig
    sup_energy: float
    derivative_bound: float
    masks: np.ndarray = field(repr=False)


def run_cdp(cfg: CDPConfig) -> CDPResult:
    domain = cfg.domain()
    grid = SpatialGrid(cfg.d)
    energy = PLaplaceEnergy(cfg.p, domain, grid, tol=cfg.prox_tol)
    tgrid = TimeGrid(cfg.T, cfg.N)

    if isinstance(cfg.u0, str):
        u0 = profile(cfg.u0, domain, grid, cfg.u0_value, 0.0)
    else:
        u0 = np.asarray(cfg.u0, dtype=float)
    if math.isinf(energy.value(0.0, u0)):
        raise FlowError("u0 must vanish outside Omega_0", step=0)

    if isinstance(cfg.f, str):
        shape = profile(cfg.f, MovingDomain.full(), grid, cfg.f_amplitude)
        forcing = np.broadcast_to(shape, (cfg.N + 1, cfg.d)).copy()
    else:
        forcing = np.asarray(cfg.f, dtype=float)

    flow = FlowConfig(cfg.pair(), tgrid, energy, u0, forcing, cfg.nu,
                      residual_tol=cfg.residual_tol, prox_tol=cfg.prox_tol)
    traj = solve_flow(flow)

    masks = np.array([grid.mask(domain, t) for t in traj.t])
    if np.any(traj.u[~masks] != 0.0):
        raise FlowError("state is nonzero outside the moving domain")

    ell = cell_weights(flow.pair, tgrid, "l")
    dnorm = np.array([energy.inner(r, r) for r in traj.D])
    derivative_bound = float(cell_convolution(ell, dnorm).max())
    sup_energy = float(np.max(np.abs(traj.energy)))
    return CDPResult(traj, cfg, domain, grid, energy, flow, sup_energy, derivative_bound, masks)
