"""Frequency-domain impedance of the linearized model.

At a stationary operating point the small-signal response to a current
input is ``(j w M - J) K = B``; the impedance is the voltage entry of ``K``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import (
    ArcNotResolvedError,
    GridMismatchError,
    ImpedanceSolveError,
    ParameterDomainError,
    UnknownParameterError,
)
from spme_eis.linearize import jacobian
from spme_eis.model.dae import DaeSystem, Mesh, ModelMode, assemble_dae, equilibrium_state
from spme_eis.model.ocp import OcpCurve
from spme_eis.model.parameters import FIT_PARAMETER_NAMES, GroupedParameters

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = (*FIT_PARAMETER_NAMES, "q_meas")


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Strictly increasing positive frequencies, stored in Hz."""

    f_hz: np.ndarray

    def __post_init__(self) -> None:
        f = np.asarray(self.f_hz, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ParameterDomainError("f_hz", f.shape, "grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(f)) or np.any(f <= 0.0):
            raise ParameterDomainError("f_hz", float(f.min()), "frequencies must be finite and > 0")
        if np.any(np.diff(f) <= 0.0):
            raise ParameterDomainError("f_hz", None, "frequencies must be strictly increasing")
        object.__setattr__(self, "f_hz", f)

    @classmethod
    def per_decade(cls, f_min: float, f_max: float, points_per_decade: float) -> FrequencyGrid:
        """Log-spaced grid with ``round(ppd * decades) + 1`` points, both ends included."""
        _check_band(f_min, f_max)
        if points_per_decade <= 0:
            raise ParameterDomainError("ppd", points_per_decade, "points per decade must be > 0")
        decades = math.log10(f_max / f_min)
        n = max(int(round(points_per_decade * decades)) + 1, 2)
        return cls.logspace(f_min, f_max, n)

    @classmethod
    def logspace(cls, f_min: float, f_max: float, n: int) -> FrequencyGrid:
        _check_band(f_min, f_max)
        if n < 2:
            raise ParameterDomainError("n_freq", n, "need at least two frequencies")
        f = np.logspace(math.log10(f_min), math.log10(f_max), int(n))
        f[0], f[-1] = f_min, f_max
        return cls(f)

    @classmethod
    def from_omega(cls, omega: Sequence[float]) -> FrequencyGrid:
        return cls(np.asarray(omega, dtype=float) / (2.0 * math.pi))

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * math.pi * self.f_hz

    def __len__(self) -> int:
        return self.f_hz.size


def _check_band(f_min: float, f_max: float) -> None:
    if not f_min > 0.0:
        raise ParameterDomainError("f_min", f_min, "frequencies must be > 0")
    if not f_max > f_min:
        raise ParameterDomainError("f_max", f_max, "f_max must exceed f_min")


@dataclass(frozen=True, eq=False)
class Spectrum:
    soc: float
    f_hz: np.ndarray
    z: np.ndarray
    temperature: float = 298.15

    def __post_init__(self) -> None:
        f = np.asarray(self.f_hz, dtype=float)
        z = np.asarray(self.z, dtype=complex)
        if f.shape != z.shape or f.ndim != 1:
            raise GridMismatchError(f"spectrum at soc={self.soc}: {f.size} frequencies but {z.size} impedances")
        if not np.all(np.isfinite(z)):
            raise ParameterDomainError("z", self.soc, "impedance values must be finite")
        object.__setattr__(self, "f_hz", f)
        object.__setattr__(self, "z", z)

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * math.pi * self.f_hz

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.f_hz)

    def sorted(self) -> Spectrum:
        order = np.argsort(self.f_hz, kind="stable")
        return Spectrum(self.soc, self.f_hz[order], self.z[order], self.temperature)

    def __len__(self) -> int:
        return self.f_hz.size


class ImpedanceDataset:
    """Spectra over distinct operating points, kept sorted by SOC."""

    def __init__(self, spectra: Sequence[Spectrum]) -> None:
        socs = [s.soc for s in spectra]
        if len(set(socs)) != len(socs):
            raise ParameterDomainError("soc", socs, "operating points must have distinct SOCs")
        self._spectra = sorted(spectra, key=lambda s: s.soc)

    @property
    def spectra(self) -> list[Spectrum]:
        return list(self._spectra)

    @property
    def socs(self) -> list[float]:
        return [s.soc for s in self._spectra]

    def spectrum_at(self, soc: float) -> Spectrum:
        for s in self._spectra:
            if s.soc == soc:
                return s
        raise KeyError(soc)

    @property
    def n_points(self) -> int:
        return sum(len(s) for s in self._spectra)

    def __iter__(self) -> Iterator[Spectrum]:
        return iter(self._spectra)

    def __len__(self) -> int:
        return len(self._spectra)


# ---------------------------------------------------------------------------
# Solves
# ---------------------------------------------------------------------------


def _solve(
    mass: sp.spmatrix, jac: sp.spmatrix, b: np.ndarray, omega: float, out_index: int, soc: float | None
) -> complex:
    if omega == 0.0 or not math.isfinite(omega):
        raise ImpedanceSolveError(omega, soc, "omega must be finite and non-zero")
    system = (1j * omega * mass - jac).tocsc()
    try:
        lu = splu(system)
    except RuntimeError as exc:
        raise ImpedanceSolveError(omega, soc, str(exc)) from exc
    k = lu.solve(b.astype(complex))
    z = complex(k[out_index])
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ImpedanceSolveError(omega, soc, "non-finite solution")
    return z


def impedance_at(dae: DaeSystem, x_m, omega: float, soc: float | None = None) -> complex:
    """Impedance [Ohm] at angular frequency ``omega`` around the rest state ``x_m``."""
    jac = jacobian(dae, x_m)
    return _solve(dae.mass_matrix, jac, dae.input_vector, omega, dae.voltage_index, soc)


def spectrum_at_soc(dae: DaeSystem, grid: FrequencyGrid, soc: float) -> Spectrum:
    x_m = equilibrium_state(dae, soc)
    jac = jacobian(dae, x_m)
    z = np.array([
        _solve(dae.mass_matrix, jac, dae.input_vector, w, dae.voltage_index, soc) for w in grid.omega
    ])
    temperature = getattr(getattr(dae.model, "params", None), "temperature", 298.15)
    return Spectrum(soc=soc, f_hz=grid.f_hz.copy(), z=z, temperature=temperature)


def spectrum(
    dae: DaeSystem,
    socs: Sequence[float],
    grid: FrequencyGrid,
    dispatcher: JobDispatcher | None = None,
) -> ImpedanceDataset:
    """Spectra at every SOC; the Jacobian is built once per SOC."""
    logger.info("=== [SPECTRUM] %d SOC(s) x %d frequencies ===", len(socs), len(grid))
    job = partial(spectrum_at_soc, dae, grid)
    if dispatcher is None:
        spectra = [job(soc) for soc in socs]
    else:
        spectra = dispatcher.map(job, list(socs))
    return ImpedanceDataset(spectra)


def high_frequency_intercept(s: Spectrum) -> float:
    return float(s.z[int(np.argmax(s.f_hz))].real)


def semicircle_diameter(s: Spectrum) -> float:
    """Real-axis span of the kinetic arc [Ohm].

    Scanning from high to low frequency, the first interior local maximum
    of -Im Z marks the arc. The first local minimum of -Im Z after it (or
    the lowest frequency when none exists) bounds it. The diameter is Re Z
    there minus Re Z at the highest frequency.
    """
    ordered = s.sorted()
    z = ordered.z[::-1]
    neg_im = -z.imag
    n = neg_im.size
    peak = None
    for k in range(1, n - 1):
        if neg_im[k] > neg_im[k - 1] and neg_im[k] >= neg_im[k + 1]:
            peak = k
            break
    if peak is None:
        raise ArcNotResolvedError(f"no interior -Im(Z) maximum in the spectrum at soc={s.soc}")
    bound = n - 1
    for k in range(peak + 1, n - 1):
        if neg_im[k] <= neg_im[k - 1] and neg_im[k] < neg_im[k + 1]:
            bound = k
            break
    return float(z[bound].real - z[0].real)


# ---------------------------------------------------------------------------
# Sensitivity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SweepPoint:
    param: str
    value: float
    factor: float
    is_nominal: bool
    spectrum: Spectrum


def _sweep_job(
    params: GroupedParameters,
    curves: tuple[OcpCurve, OcpCurve],
    mesh: Mesh,
    mode: ModelMode,
    grid: FrequencyGrid,
    soc: float,
    param_name: str,
    value: float,
) -> Spectrum:
    perturbed = params.updated(**{param_name: value})
    dae = assemble_dae(perturbed, curves, mesh, mode)
    return spectrum_at_soc(dae, grid, soc)


def sweep_factors(n_steps: int) -> np.ndarray:
    """``n_steps`` multipliers from 0.5 to 2 with exactly one equal to 1."""
    n_below = (n_steps - 1) // 2
    n_above = n_steps - 1 - n_below
    below = 2.0 ** (-np.arange(n_below, 0, -1) / n_below)
    above = 2.0 ** (np.arange(1, n_above + 1) / n_above)
    return np.concatenate([below, [1.0], above])


def sensitivity_sweep(
    params: GroupedParameters,
    curves: tuple[OcpCurve, OcpCurve],
    mesh: Mesh,
    param_name: str,
    n_steps: int,
    soc: float,
    grid: FrequencyGrid | None = None,
    mode: ModelMode = ModelMode.SPME,
    dispatcher: JobDispatcher | None = None,
) -> list[SweepPoint]:
    """Spectra with ``param_name`` log-spaced over [0.5, 2] x nominal.

    The nominal set is always one of the ``n_steps`` points and is flagged.
    Odd counts split evenly around it; for even counts the upper leg gets the
    extra point.
    """
    if param_name not in SWEEP_PARAMETERS:
        raise UnknownParameterError(param_name, list(SWEEP_PARAMETERS))
    if n_steps < 3:
        raise ParameterDomainError("n_steps", n_steps, "a sweep needs at least three steps")
    grid = grid or FrequencyGrid.per_decade(2e-4, 1e3, 10)
    factors = sweep_factors(n_steps)
    nominal = getattr(params, param_name)
    values = [nominal * f for f in factors]
    logger.info("--- [SWEEP] %s: %d steps around %g at soc=%g ---", param_name, n_steps, nominal, soc)

    job = partial(_sweep_job, params, curves, mesh, ModelMode(mode), grid, soc, param_name)
    spectra = dispatcher.map(job, values) if dispatcher is not None else [job(v) for v in values]
    return [
        SweepPoint(param=param_name, value=v, factor=float(f), is_nominal=bool(f == 1.0), spectrum=s)
        for v, f, s in zip(values, factors, spectra)
    ]
