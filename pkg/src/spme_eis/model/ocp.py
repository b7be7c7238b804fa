"""Tabulated open-circuit potentials with monotone cubic interpolation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from spme_eis.errors import OcpDomainError, ParameterDomainError
from spme_eis.model.parameters import GroupedParameters, stoichiometry_at_soc


@dataclass(frozen=True, eq=False)
class OcpCurve:
    stoichiometry: np.ndarray
    potential: np.ndarray
    name: str = ""
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)
    _deriv: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.stoichiometry, dtype=float)
        u = np.asarray(self.potential, dtype=float)
        if c.ndim != 1 or c.shape != u.shape or c.size < 2:
            raise ParameterDomainError("stoichiometry", c.size, "need at least two (c, U) samples of equal length")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(u))):
            raise ParameterDomainError("potential", None, "samples must be finite")
        if np.any(np.diff(c) <= 0.0):
            raise ParameterDomainError("stoichiometry", None, "samples must be strictly increasing")
        if c[0] <= 0.0 or c[-1] >= 1.0:
            raise ParameterDomainError("stoichiometry", (c[0], c[-1]), "samples must lie strictly inside (0, 1)")
        interp = PchipInterpolator(c, u, extrapolate=False)
        object.__setattr__(self, "stoichiometry", c)
        object.__setattr__(self, "potential", u)
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_deriv", interp.derivative())

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.stoichiometry[0]), float(self.stoichiometry[-1])

    def _check(self, c: np.ndarray) -> None:
        lo, hi = self.domain
        if np.any(c < lo) or np.any(c > hi) or np.any(np.isnan(c)):
            bad = c[(c < lo) | (c > hi) | np.isnan(c)]
            raise OcpDomainError(
                f"OCP {self.name or '<unnamed>'} evaluated at {bad.flat[0]!r}, outside [{lo}, {hi}]"
            )

    def value(self, c):
        arr = np.asarray(c, dtype=float)
        self._check(arr)
        out = self._interp(arr)
        return float(out) if np.ndim(c) == 0 else out

    def slope(self, c):
        arr = np.asarray(c, dtype=float)
        self._check(arr)
        out = self._deriv(arr)
        return float(out) if np.ndim(c) == 0 else out

    def __call__(self, c):
        return self.value(c)


def ocp_eval(curve: OcpCurve, c):
    """(U, dU/dc) at stoichiometry ``c``."""
    return curve.value(c), curve.slope(c)


def ocp_slopes(g: GroupedParameters, curves: tuple[OcpCurve, OcpCurve], soc: float) -> tuple[float, float]:
    """OCP slopes (U'+, U'-) at the stoichiometries set by ``soc``."""
    c_pos, c_neg = stoichiometry_at_soc(soc, g)
    return curves[0].slope(c_pos), curves[1].slope(c_neg)


# Synthetic monotone curves, one plateau per electrode. The negative plateau
# spans the mid-SOC range of the reference windows so that U'_- ~ 0 there.
_SYNTHETIC_NEG = (
    (0.001, 1.0000), (0.010, 0.7000), (0.020, 0.5000), (0.040, 0.3300),
    (0.070, 0.2400), (0.100, 0.2000), (0.150, 0.1700), (0.200, 0.1450),
    (0.280, 0.1250), (0.350, 0.1100), (0.400, 0.0935), (0.420, 0.0900),
    (0.470, 0.0895), (0.520, 0.0890), (0.570, 0.0885), (0.620, 0.0880),
    (0.660, 0.0860), (0.720, 0.0830), (0.800, 0.0800), (0.880, 0.0770),
    (0.940, 0.0700), (0.970, 0.0600), (0.990, 0.0400), (0.999, 0.0200),
)

_SYNTHETIC_POS = (
    (0.001, 4.600), (0.10, 4.400), (0.20, 4.250), (0.25, 4.190),
    (0.30, 4.130), (0.33, 4.100), (0.37, 4.098), (0.41, 4.096),
    (0.45, 4.030), (0.50, 3.950), (0.55, 3.880), (0.60, 3.820),
    (0.65, 3.770), (0.70, 3.720), (0.75, 3.670), (0.80, 3.610),
    (0.85, 3.540), (0.90, 3.450), (0.95, 3.300), (0.999, 3.000),
)

NEG_PLATEAU = (0.42, 0.62)
POS_PLATEAU = (0.33, 0.41)


def synthetic_negative_ocp() -> OcpCurve:
    c, u = zip(*_SYNTHETIC_NEG)
    return OcpCurve(np.array(c), np.array(u), name="synthetic-negative")


def synthetic_positive_ocp() -> OcpCurve:
    c, u = zip(*_SYNTHETIC_POS)
    return OcpCurve(np.array(c), np.array(u), name="synthetic-positive")


def synthetic_curves() -> tuple[OcpCurve, OcpCurve]:
    """(positive, negative) synthetic OCP curves."""
    return synthetic_positive_ocp(), synthetic_negative_ocp()
