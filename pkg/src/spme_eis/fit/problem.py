from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from spme_eis.errors import GridMismatchError, ParameterDomainError, UnknownParameterError
from spme_eis.impedance import ImpedanceDataset
from spme_eis.model.dae import Mesh, ModelMode
from spme_eis.model.ocp import OcpCurve
from spme_eis.model.parameters import FIT_PARAMETER_NAMES, STOICHIOMETRY_NAMES, GroupedParameters
from spme_eis.simulate.profile import CurrentProfile

# Optimisation bounds of the reference LG M50 study.
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "tau_d_pos": (5e2, 1e4),
    "tau_d_neg": (5e2, 1e4),
    "tau_e_pos": (2e2, 1e3),
    "tau_e_neg": (2e2, 1e3),
    "tau_e_sep": (2e2, 1e3),
    "zeta_pos": (0.5, 1.5),
    "zeta_neg": (0.5, 1.5),
    "q_e": (5e2, 1e3),
    "tau_ct_pos": (1e3, 5e4),
    "tau_ct_neg": (1e3, 5e4),
    "c_dl_pos": (0.0, 1.0),
    "c_dl_neg": (0.0, 1.0),
    "sto_pos_0": (0.8, 0.9),
    "sto_neg_0": (0.0, 0.1),
    "sto_pos_100": (0.2, 0.3),
    "sto_neg_100": (0.85, 0.95),
    "t_plus": (0.2, 0.5),
    "r0": (0.0, 0.05),
}


def default_bounds() -> dict[str, tuple[float, float]]:
    return dict(DEFAULT_BOUNDS)


def fit_free_parameters(mode: str = "impedance") -> tuple[str, ...]:
    """Free names per fit mode; voltage fits hold the stoichiometry windows fixed."""
    if mode == "impedance":
        return FIT_PARAMETER_NAMES
    if mode == "voltage":
        return tuple(n for n in FIT_PARAMETER_NAMES if n not in STOICHIOMETRY_NAMES)
    raise ParameterDomainError("fit_mode", mode, "expected 'impedance' or 'voltage'")


@dataclass(frozen=True, eq=False)
class VoltageTarget:
    """Measured terminal voltage under a known current, starting at rest at ``soc0``."""

    profile: CurrentProfile
    times: np.ndarray
    voltage: np.ndarray
    soc0: float

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.voltage, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size == 0:
            raise GridMismatchError(f"{t.size} sample times but {v.size} voltages")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "voltage", v)


@dataclass(frozen=True, eq=False)
class FitProblem:
    target: ImpedanceDataset | VoltageTarget
    fixed: GroupedParameters
    curves: tuple[OcpCurve, OcpCurve]
    mesh: Mesh = field(default_factory=Mesh)
    mode: ModelMode = ModelMode.SPME
    free: tuple[str, ...] | None = None
    bounds: Mapping[str, tuple[float, float]] | None = None
    tol: float = 1e-6

    def __post_init__(self) -> None:
        free = tuple(self.free) if self.free is not None else fit_free_parameters(self.kind)
        if not free:
            raise ParameterDomainError("free", free, "need at least one free parameter")
        for name in free:
            if name not in FIT_PARAMETER_NAMES:
                raise UnknownParameterError(name, list(FIT_PARAMETER_NAMES))
        bounds = default_bounds()
        for name, pair in (self.bounds or {}).items():
            if name not in FIT_PARAMETER_NAMES:
                raise UnknownParameterError(name, list(FIT_PARAMETER_NAMES))
            bounds[name] = (float(pair[0]), float(pair[1]))
        for name in free:
            lo, hi = bounds[name]
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ParameterDomainError(f"bound.{name}", (lo, hi), "bounds must be finite with lower < upper")
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "bounds", {name: bounds[name] for name in free})
        object.__setattr__(self, "mode", ModelMode(self.mode))

    @property
    def kind(self) -> str:
        return "impedance" if isinstance(self.target, ImpedanceDataset) else "voltage"

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.bounds[n][0] for n in self.free])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.bounds[n][1] for n in self.free])

    def bound_pairs(self) -> list[tuple[float, float]]:
        return [self.bounds[n] for n in self.free]

    def to_parameters(self, theta: Sequence[float]) -> GroupedParameters:
        """Fixed parameters with ``theta`` substituted; Q_th re-derived."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.free),):
            raise ParameterDomainError("theta", theta.shape, f"expected {len(self.free)} values")
        return self.fixed.updated(**{n: float(v) for n, v in zip(self.free, theta)})

    def theta_of(self, params: GroupedParameters) -> np.ndarray:
        return np.array([getattr(params, n) for n in self.free])
