"""Solvers and numeric certificates for time-fractional gradient flows.

The package discretizes

    d/dt [k * (u - u0)] + d phi^t(u) \\ni f

for completely positive kernel pairs ``(k, l)`` and time-dependent convex
energies ``phi^t``, including a p-Laplace energy on a moving interval.
"""
from .kernels import (
    KernelPair,
    TimeGrid,
    ConvWeights,
    rl_pair,
    classical_pair,
    tabulated_pair,
    cell_weights,
    check_pc_identity,
    resolvent_kernel,
    mittag_leffler,
)
from .volterra import VolterraProblem, solve_volterra, gronwall_bound, check_dominated
from .convex import (
    Energy,
    QuadraticEnergy,
    AbsoluteValueEnergy,
    ZeroIndicatorEnergy,
    ZeroEnergy,
    prox,
    moreau_value,
    shift_regularize,
    kenmochi_probe,
)
from .stepper import FlowConfig, Trajectory, FlowError, solve_flow, continuous_dependence_check
from .plaplace import MovingDomain, SpatialGrid, PLaplaceEnergy, CDPConfig, run_cdp

__version__ = "0.1.0"

__all__ = [
    "KernelPair",
    "TimeGrid",
    "ConvWeights",
    "rl_pair",
    "classical_pair",
    "tabulated_pair",
    "cell_weights",
    "check_pc_identity",
    "resolvent_kernel",
    "mittag_leffler",
    "VolterraProblem",
    "solve_volterra",
    "gronwall_bound",
    "check_dominated",
    "Energy",
    "QuadraticEnergy",
    "AbsoluteValueEnergy",
    "ZeroIndicatorEnergy",
    "ZeroEnergy",
    "prox",
    "moreau_value",
    "shift_regularize",
    "kenmochi_probe",
    "FlowConfig",
    "Trajectory",
    "FlowError",
    "solve_flow",
    "continuous_dependence_check",
    "MovingDomain",
    "SpatialGrid",
    "PLaplaceEnergy",
    "CDPConfig",
    "run_cdp",
]
