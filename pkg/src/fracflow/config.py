"""Run configuration: a flat YAML mapping validated before any computation.

Example::

    problem: scalar_linear
    kernel: rl
    alpha: 0.5
    T: 1.0
    N: 2048
    u0: constant
    u0_value: 1.0
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .convex import Energy, energy_by_name
from .kernels import KernelPair, TimeGrid, classical_pair, rl_pair
from .plaplace import CDPConfig, MovingDomain

__all__ = ["RunConfig", "ConfigError", "load_config", "config_hash"]

Profile = Literal["zero", "sin", "bump", "constant"]


class ConfigError(ValueError):
    """Unreadable or invalid configuration; ``fields`` lists offending keys."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    problem: Literal["scalar_linear", "cdp", "custom_energy"] = "scalar_linear"
    kernel: Literal["rl", "classical"] = "rl"
    alpha: Optional[float] = Field(None, gt=0.0, lt=1.0)
    T: float = Field(1.0, gt=0.0)
    N: int = Field(256, ge=1)

    # state space: dimension for scalar/custom problems, interior nodes for cdp
    d: int = Field(1, ge=1)
    p: float = Field(2.0, ge=2.0)
    a0: float = 0.0
    b0: float = 1.0
    A: float = 0.0
    B: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    energy: Literal["quadratic", "abs", "zero_indicator", "zero"] = "quadratic"
    c: float = Field(1.0, ge=0.0)

    u0: Profile = "constant"
    u0_value: float = 1.0
    f: Profile = "zero"
    f_amplitude: float = 0.0
    nu: float = Field(0.0, ge=0.0)

    residual_tol: float = Field(1e-10, gt=0.0)
    prox_tol: float = Field(1e-11, gt=0.0)
    output_dir: str = "out"
    seed: int = 0
    probes: Optional[List[int]] = None
    snapshots: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self):
        if self.kernel == "rl" and self.alpha is None:
            raise ValueError("field 'alpha': kernel 'rl' requires alpha in (0, 1)")
        if self.problem != "cdp" and self.u0 in ("sin", "bump"):
            raise ValueError(f"field 'u0': profile {self.u0!r} needs a spatial grid (problem: cdp)")
        if self.problem != "cdp" and self.f in ("sin", "bump"):
            raise ValueError(f"field 'f': profile {self.f!r} needs a spatial grid (problem: cdp)")
        if self.problem == "cdp":
            try:
                self.domain()
            except ValueError as exc:
                raise ValueError(f"fields 'a0', 'b0', 'A', 'B': {exc}") from None
        if self.probes is not None and any(not 0 <= i < self.d for i in self.probes):
            raise ValueError(f"field 'probes': indices must lie in [0, {self.d})")
        return self

    # -- builders -----------------------------------------------------------
    def pair(self) -> KernelPair:
        return rl_pair(self.alpha) if self.kernel == "rl" else classical_pair()

    def grid(self, N: Optional[int] = None) -> TimeGrid:
        return TimeGrid(self.T, self.N if N is None else N)

    def domain(self) -> MovingDomain:
        return MovingDomain(self.a0, self.b0, self.A, self.B, self.omega, self.phase)

    def cdp(self, N: Optional[int] = None) -> CDPConfig:
        return CDPConfig(
            alpha=self.alpha if self.kernel == "rl" else None,
            p=self.p, T=self.T, N=self.N if N is None else N, d=self.d,
            a0=self.a0, b0=self.b0, A=self.A, B=self.B, omega=self.omega, phase=self.phase,
            u0=self.u0, u0_value=self.u0_value, f=self.f, f_amplitude=self.f_amplitude,
            nu=self.nu, prox_tol=self.prox_tol, residual_tol=self.residual_tol,
        )

    def flat_energy(self) -> Energy:
        name = "quadratic" if self.problem == "scalar_linear" else self.energy
        return energy_by_name(name, dim=self.d, c=self.c)

    def flat_u0(self) -> np.ndarray:
        return np.full(self.d, self.u0_value if self.u0 == "constant" else 0.0)

    def flat_f(self) -> float:
        return self.f_amplitude if self.f == "constant" else 0.0


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the validated config."""
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _field_names(err: ValidationError):
    names = []
    for item in err.errors():
        loc = ".".join(str(x) for x in item.get("loc", ()))
        if loc:
            names.append(loc)
        msg = str(item.get("msg", ""))
        if "field '" in msg:
            names.append(msg.split("field '", 1)[1].split("'", 1)[0])
    return names


def parse_config(data) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    try:
        return RunConfig(**data)
    except ValidationError as err:
        lines = []
        for item in err.errors():
            loc = ".".join(str(x) for x in item.get("loc", ())) or "config"
            lines.append(f"{loc}: {item['msg']}")
        raise ConfigError("; ".join(lines), _field_names(err)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    return parse_config(data)
