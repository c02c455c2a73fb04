"""Completely positive kernel pairs and their cell-average weights.

A kernel pair ``(k, l)`` satisfies ``k * l = 1`` with both kernels nonnegative
and nonincreasing.  The Riemann-Liouville pair ``(k_{1-a}, k_a)`` is the
canonical example; ``k`` is singular at the origin, so every discrete weight is
built from exact antiderivatives rather than point samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy import integrate

__all__ = [
    "KernelPair",
    "TimeGrid",
    "ConvWeights",
    "rl_pair",
    "classical_pair",
    "tabulated_pair",
    "pair_from_dict",
    "cell_weights",
    "pc_identity_errors",
    "check_pc_identity",
    "cell_convolution",
    "resolvent_kernel",
    "mittag_leffler",
]

RL = "rl"
CLASSICAL = "classical"
TABULATED = "tabulated"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = n * T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be positive and finite, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")
        object.__setattr__(self, "N", int(self.N))

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.N + 1) * self.tau
        t[-1] = self.T
        return t

    def refine(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.T, self.N * factor)


@dataclass(frozen=True)
class KernelPair:
    """A kernel pair ``(k, l)`` with time-integrated accessors ``K`` and ``L``.

    ``kind`` is one of ``"rl"``, ``"classical"`` or ``"tabulated"``.  The
    classical kind is the ``alpha -> 1`` limit: ``k`` is a point mass at the
    origin (``K(t) = 1`` for ``t > 0``) and ``l = 1``.
    """

    kind: str
    alpha: Optional[float] = None
    k: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)
    ell: Optional[Callable[[float], float]] = field(default=None, repr=False, compare=False)
    K_func: Optional[Callable] = field(default=None, repr=False, compare=False)
    L_func: Optional[Callable] = field(default=None, repr=False, compare=False)

    def K(self, t):
        """Antiderivative of ``k``, ``K(t) = int_0^t k``."""
        t = np.asarray(t, dtype=float)
        if self.kind == RL:
            return t ** (1.0 - self.alpha) / math.gamma(2.0 - self.alpha)
        if self.kind == CLASSICAL:
            return np.where(t > 0, 1.0, 0.0)
        if self.K_func is not None:
            return np.asarray(self.K_func(t), dtype=float)
        return _quad_antiderivative(self.k, t)

    def L(self, t):
        """Antiderivative of ``l``, ``L(t) = int_0^t l``."""
        t = np.asarray(t, dtype=float)
        if self.kind == RL:
            return t ** self.alpha / math.gamma(1.0 + self.alpha)
        if self.kind == CLASSICAL:
            return t.copy()
        if self.L_func is not None:
            return np.asarray(self.L_func(t), dtype=float)
        return _quad_antiderivative(self.ell, t)

    def to_dict(self) -> dict:
        if self.kind == TABULATED:
            raise ValueError("tabulated kernel pairs are not serializable")
        return {"kind": self.kind, "alpha": self.alpha}


def _quad_antiderivative(func, t):
    flat = np.atleast_1d(t).ravel()
    out = np.empty_like(flat)
    for i, ti in enumerate(flat):
        out[i] = 0.0 if ti <= 0 else integrate.quad(func, 0.0, ti, limit=200)[0]
    return out.reshape(np.shape(t))


def rl_pair(alpha: float) -> KernelPair:
    """Riemann-Liouville pair ``k = t^{-a}/Gamma(1-a)``, ``l = t^{a-1}/Gamma(a)``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return KernelPair(RL, alpha)


def classical_pair() -> KernelPair:
    return KernelPair(CLASSICAL, 1.0)


def tabulated_pair(k, ell, K=None, L=None) -> KernelPair:
    """User-supplied pair.  Missing antiderivatives fall back to quadrature."""
    if k is None or ell is None:
        raise ValueError("tabulated pairs need both kernels k and ell")
    return KernelPair(TABULATED, None, k, ell, K, L)


def pair_from_dict(data: dict) -> KernelPair:
    kind = data.get("kind")
    if kind == RL:
        if data.get("alpha") is None:
            raise ValueError("kernel kind 'rl' requires alpha")
        return rl_pair(data["alpha"])
    if kind == CLASSICAL:
        return classical_pair()
    raise ValueError(f"unsupported kernel kind {kind!r}")


@dataclass(frozen=True)
class ConvWeights:
    """Cell averages ``kappa_m = (1/tau) int_{t_m}^{t_{m+1}} k``, m = 0..N-1."""

    values: np.ndarray
    tau: float
    which: str = "k"
    metadata: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, m):
        return self.values[m]

    def mass(self) -> float:
        return float(self.tau * self.values.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["m", "kappa"])
            for m, v in enumerate(self.values):
                writer.writerow([m, repr(float(v))])


def cell_weights(pair: KernelPair, grid: TimeGrid, which: str = "k") -> ConvWeights:
    """Cell-average weights of ``k`` (``which="k"``) or ``l`` (``which="l"``)."""
    if which not in ("k", "l"):
        raise ValueError(f"which must be 'k' or 'l', got {which!r}")
    tau = grid.tau
    meta = {"kind": pair.kind, "which": which, "quadrature_fallback": False}
    if pair.kind == CLASSICAL:
        if which == "k":
            values = np.zeros(grid.N)
            values[0] = 1.0 / tau
        else:
            values = np.ones(grid.N)
        return ConvWeights(values, tau, which, meta)

    if pair.kind == TABULATED:
        missing = pair.K_func is None if which == "k" else pair.L_func is None
        meta["quadrature_fallback"] = missing
    anti = pair.K if which == "k" else pair.L
    # Telescoping differences of the antiderivative; the singular kernel is
    # never sampled at t = 0.
    values = np.diff(anti(grid.nodes)) / tau
    return ConvWeights(values, tau, which, meta)


def pc_identity_errors(pair: KernelPair, grid: TimeGrid) -> np.ndarray:
    """Nodewise ``|tau sum_j kappa_j(k) kappa_{n-1-j}(l) - 1|`` for n = 1..N."""
    if pair.kind == CLASSICAL:
        raise ValueError("the classical pair satisfies k * l = 1 by construction")
    kk = cell_weights(pair, grid, "k").values
    ll = cell_weights(pair, grid, "l").values
    conv = grid.tau * np.convolve(kk, ll)[: grid.N]
    return np.abs(conv - 1.0)


def check_pc_identity(pair: KernelPair, grid: TimeGrid) -> float:
    """Maximum nodal defect of the discrete identity ``k * l = 1``."""
    return float(pc_identity_errors(pair, grid).max())


def cell_convolution(weights, g) -> np.ndarray:
    """``(kappa * g)(t_n) ~ tau sum_{m=1}^n kappa_{n-m} g_m`` for n = 0..N.

    ``g`` holds node samples ``g_0..g_N``; ``g_0`` never enters.
    """
    kappa = weights.values
    g = np.asarray(g, dtype=float)
    N = len(kappa)
    if g.shape[0] != N + 1:
        raise ValueError(f"need {N + 1} node samples, got {g.shape[0]}")
    out = np.zeros(N + 1)
    out[1:] = weights.tau * np.convolve(kappa, g[1:])[:N]
    return out


def resolvent_kernel(pair: KernelPair, lam: float, grid: TimeGrid) -> np.ndarray:
    """Node samples of ``k_lam`` solving ``lam k_lam + l * k_lam = 1``.

    The convolution uses the ``l`` cell weights with the unknown node value
    carrying the local weight ``kappa_0(l)``, so each step is a scalar update
    ``k_n = (1 - tau sum_{j<n} kappa_{n-j} k_j) / (lam + tau kappa_0)``.
    """
    lam = float(lam)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    kappa = cell_weights(pair, grid, "l").values
    tau = grid.tau
    out = np.empty(grid.N + 1)
    out[0] = 1.0 / lam
    denom = lam + tau * kappa[0]
    for n in range(1, grid.N + 1):
        hist = np.dot(kappa[n - 1:0:-1], out[1:n]) if n > 1 else 0.0
        out[n] = (1.0 - tau * hist) / denom
    return out


def _ml_log_max_term(alpha: float, x: float) -> float:
    """log10 of the largest series term ``x^m / Gamma(alpha m + 1)``."""
    if x == 0:
        return 0.0
    m_peak = int(x ** (1.0 / alpha) / alpha) + 2
    m = np.arange(0, 2 * m_peak + 10)
    from scipy.special import gammaln

    logs = m * math.log(x) - gammaln(alpha * m + 1.0)
    return float(logs.max() / math.log(10))


def _ml_series(alpha: float, z: float) -> float:
    x = abs(z)
    digits = max(_ml_log_max_term(alpha, x), 0.0)
    with mpmath.workdps(int(digits) + 30):
        zz = mpmath.mpf(z)
        a = mpmath.mpf(alpha)
        total = mpmath.mpf(0)
        eps = mpmath.mpf(10) ** (-25)
        m = 0
        peaked = False
        prev = None
        while True:
            term = zz ** m / mpmath.gamma(a * m + 1)
            total += term
            mag = abs(term)
            if prev is not None and mag < prev:
                peaked = True
            if peaked and mag < eps:
                break
            prev = mag
            m += 1
            if m > 200000:
                raise RuntimeError("Mittag-Leffler series did not terminate")
        return float(total)


def _ml_integral(alpha: float, x: float) -> float:
    """``E_a(-x)`` from its completely monotone spectral representation."""
    y = x ** (1.0 / alpha)
    s, c = math.sin(alpha * math.pi), math.cos(alpha * math.pi)

    def smooth(r):
        ra = r ** alpha
        return math.exp(-r * y) / (ra * ra + 2.0 * ra * c + 1.0)

    head = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(alpha - 1.0, 0.0),
                          epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    tail = integrate.quad(lambda r: smooth(r) * r ** (alpha - 1.0), 1.0, np.inf,
                          epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return s / math.pi * (head + tail)


def mittag_leffler(alpha: float, z, method: str = "auto"):
    """Mittag-Leffler function ``E_a(z) = sum_m z^m / Gamma(a m + 1)`` for z <= 0.

    Parameters
    ----------
    alpha : float in (0, 1]
    z : float or array of floats, all <= 0
    method : {"auto", "series", "integral"}
        ``series`` sums in extended precision (the alternating terms cancel
        heavily for large ``|z|``); ``integral`` integrates the spectral
        density, valid for ``alpha < 1``.  ``auto`` picks the series while the
        largest term stays below ``1e60``.
    """
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    arr = np.asarray(z, dtype=float)
    if np.any(arr > 0):
        raise ValueError("mittag_leffler supports z <= 0 only")
    if method not in ("auto", "series", "integral"):
        raise ValueError(f"unknown method {method!r}")

    def one(zi: float) -> float:
        if zi == 0.0:
            return 1.0
        if alpha == 1.0:
            return math.exp(zi)
        use = method
        if use == "auto":
            use = "series" if _ml_log_max_term(alpha, -zi) <= 60 else "integral"
        if use == "series":
            return _ml_series(alpha, zi)
        return _ml_integral(alpha, -zi)

    if arr.ndim == 0:
        return one(float(arr))
    return np.array([one(float(v)) for v in arr.ravel()]).reshape(arr.shape)
