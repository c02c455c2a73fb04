"""Time-dependent convex energies on a finite-dimensional Hilbert space.

An :class:`Energy` evaluates ``phi^t`` (``inf`` outside the effective domain)
and its resolvent ``J_lam^t = (I + lam d phi^t)^{-1}``.  The ambient inner
product is ``(a, b) = weight * sum(a * b)``, which mimics ``L^2`` on a grid of
spacing ``weight``.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = [
    "Energy",
    "QuadraticEnergy",
    "AbsoluteValueEnergy",
    "ZeroIndicatorEnergy",
    "ZeroEnergy",
    "ShiftedEnergy",
    "ProxError",
    "UnsupportedCapability",
    "prox",
    "moreau_value",
    "shift_regularize",
    "kenmochi_probe",
    "subgradient_gap",
    "energy_by_name",
]


class ProxError(RuntimeError):
    """Inner minimization did not converge."""

    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


class UnsupportedCapability(NotImplementedError):
    pass


class Energy:
    """Base class for a family ``t -> phi^t`` of proper convex functionals.

    Subclasses implement :meth:`value` and :meth:`resolvent`.  ``shift_map``
    transports states between time slices; energies without one leave it as
    ``None``.
    """

    autonomous = True
    nonnegative = True
    weight = 1.0
    dim = 1

    def value(self, t, w) -> float:
        raise NotImplementedError

    def resolvent(self, t, lam, z) -> np.ndarray:
        raise NotImplementedError

    shift_map = None

    def inner(self, a, b) -> float:
        return float(self.weight * np.dot(np.ravel(a), np.ravel(b)))

    def norm(self, a) -> float:
        return math.sqrt(max(self.inner(a, a), 0.0))

    def feasible_sample(self, t, rng, scale=1.0) -> np.ndarray:
        """A random point of ``D(phi^t)``; used by property checks."""
        return scale * rng.standard_normal(self.dim)

    def __call__(self, t, w) -> float:
        return self.value(t, w)


def _as_state(z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise ValueError("state has non-finite entries")
    return z


class _IdentityShift:
    def shift_map(self, t, s, w):
        return np.array(w, dtype=float, copy=True)


class QuadraticEnergy(_IdentityShift, Energy):
    """``phi(w) = (c/2) ||w||^2``."""

    def __init__(self, c=1.0, dim=1, weight=1.0):
        if c < 0:
            raise ValueError("c must be nonnegative")
        self.c = float(c)
        self.dim = int(dim)
        self.weight = float(weight)

    def value(self, t, w):
        w = np.asarray(w, dtype=float)
        return 0.5 * self.c * self.inner(w, w)

    def resolvent(self, t, lam, z):
        return np.asarray(z, dtype=float) / (1.0 + lam * self.c)


class AbsoluteValueEnergy(_IdentityShift, Energy):
    """``phi(w) = weight * sum |w_i|`` (``|u|`` for d = 1); soft thresholding."""

    def __init__(self, dim=1, weight=1.0):
        self.dim = int(dim)
        self.weight = float(weight)

    def value(self, t, w):
        return float(self.weight * np.sum(np.abs(w)))

    def resolvent(self, t, lam, z):
        z = np.asarray(z, dtype=float)
        return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


class ZeroIndicatorEnergy(_IdentityShift, Energy):
    """Indicator of ``{0}``; the resolvent is the projection onto the origin."""

    def __init__(self, dim=1, weight=1.0):
        self.dim = int(dim)
        self.weight = float(weight)

    def value(self, t, w):
        return 0.0 if not np.any(np.asarray(w)) else math.inf

    def resolvent(self, t, lam, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def feasible_sample(self, t, rng, scale=1.0):
        return np.zeros(self.dim)


class ZeroEnergy(_IdentityShift, Energy):
    def __init__(self, dim=1, weight=1.0):
        self.dim = int(dim)
        self.weight = float(weight)

    def value(self, t, w):
        return 0.0

    def resolvent(self, t, lam, z):
        return np.array(z, dtype=float, copy=True)


class ShiftedEnergy(Energy):
    """``psi^t(z) = phi^t(z) + (D0/2)||z||^2 + D0``.

    The resolvent reduces exactly to the base one:
    ``J^psi_lam(z) = J^phi_{lam/(1+lam D0)}(z / (1 + lam D0))``.
    """

    def __init__(self, base: Energy, D0: float):
        if D0 < 0:
            raise ValueError("D0 must be nonnegative")
        self.base = base
        self.D0 = float(D0)
        self.dim = base.dim
        self.weight = base.weight
        self.autonomous = base.autonomous
        self.nonnegative = base.nonnegative
        self.shift_map = base.shift_map

    def value(self, t, w):
        v = self.base.value(t, w)
        if math.isinf(v):
            return v
        return v + 0.5 * self.D0 * self.inner(w, w) + self.D0

    def resolvent(self, t, lam, z):
        s = 1.0 + lam * self.D0
        w, _ = prox(self.base, t, lam / s, np.asarray(z, dtype=float) / s)
        return w

    def feasible_sample(self, t, rng, scale=1.0):
        return self.base.feasible_sample(t, rng, scale)


def prox(energy: Energy, t, lam, z):
    """Resolvent ``w = J_lam^t(z)`` and Yosida slope ``xi = (z - w)/lam``.

    ``xi`` lies in the subdifferential of ``phi^t`` at ``w``.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    z = _as_state(z)
    w = energy.resolvent(t, lam, z)
    xi = (z - w) / lam
    return w, xi


def moreau_value(energy: Energy, t, lam, z) -> float:
    z = _as_state(z)
    w, _ = prox(energy, t, lam, z)
    d = z - w
    return energy.inner(d, d) / (2.0 * lam) + energy.value(t, w)


def shift_regularize(energy: Energy, D0: float) -> ShiftedEnergy:
    return ShiftedEnergy(energy, D0)


def subgradient_gap(energy: Energy, t, w, xi, vs) -> float:
    """``min_v phi(v) - phi(w) - (xi, v - w)`` over test points ``vs``."""
    fw = energy.value(t, w)
    gaps = []
    for v in vs:
        fv = energy.value(t, v)
        if math.isinf(fv):
            continue
        gaps.append(fv - fw - energy.inner(xi, np.asarray(v) - w))
    return min(gaps) if gaps else math.inf


def kenmochi_probe(energy: Energy, s, t, w):
    """Empirical ratios of the nonlocal Kenmochi inequalities at ``(s, t, w)``.

    Returns ``(Psi(t, s, w), ratio1, ratio2)`` where ``ratio1`` bounds the
    transport distance and ``ratio2`` the energy increase, each normalized by
    ``|t - s|`` and the appropriate power of ``1 + |phi^s(w)|``.
    """
    if energy.shift_map is None:
        raise UnsupportedCapability(f"{type(energy).__name__} exposes no shift map")
    if t < s:
        raise ValueError("kenmochi_probe needs t >= s")
    w = _as_state(w)
    phi_s = energy.value(s, w)
    if math.isinf(phi_s):
        raise ValueError("w must lie in the effective domain at time s")
    if t == s:
        return w.copy(), 0.0, 0.0
    shifted = energy.shift_map(t, s, w)
    dt = t - s
    r1 = energy.norm(shifted - w) / (dt * math.sqrt(1.0 + abs(phi_s)))
    r2 = max(0.0, energy.value(t, shifted) - phi_s) / (dt * (1.0 + abs(phi_s)))
    return shifted, r1, r2


def energy_by_name(name: str, dim: int = 1, weight: float = 1.0, c: float = 1.0) -> Energy:
    table = {
        "quadratic": lambda: QuadraticEnergy(c, dim, weight),
        "abs": lambda: AbsoluteValueEnergy(dim, weight),
        "zero_indicator": lambda: ZeroIndicatorEnergy(dim, weight),
        "zero": lambda: ZeroEnergy(dim, weight),
    }
    try:
        return table[name]()
    except KeyError:
        raise ValueError(f"unknown energy {name!r}; choose from {sorted(table)}") from None
