"""Impedance by time-domain simulation of a sinusoidal current.

Used as an oracle for the frequency-domain solve: integrate from rest,
drop the transient periods and project voltage and current onto the
excitation frequency.
"""

from __future__ import annotations

import logging
import math
from functools import partial
from typing import Sequence

import numpy as np

from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import LeakageError, ParameterDomainError
from spme_eis.impedance import FrequencyGrid, Spectrum
from spme_eis.model.dae import DaeSystem, equilibrium_state
from spme_eis.simulate.integrator import integrate
from spme_eis.simulate.profile import sinusoid_profile

logger = logging.getLogger(__name__)

LEAKAGE_RTOL = 1e-9


def dft_bin(samples, omega: float, sample_period: float, t0: float = 0.0) -> complex:
    """Fourier coefficient at ``omega`` in the sine convention.

    ``A sin(omega t + phi)`` sampled over whole periods gives ``A e^{j phi}``.
    The window must hold an integer number of periods.
    """
    v = np.asarray(samples, dtype=float)
    n = v.size
    if n == 0:
        raise ParameterDomainError("samples", 0, "need at least one sample")
    if not (omega > 0.0 and sample_period > 0.0):
        raise ParameterDomainError("omega", omega, "omega and sample period must be > 0")
    cycles = n * sample_period * omega / (2.0 * math.pi)
    whole = round(cycles)
    if whole < 1 or abs(cycles - whole) > LEAKAGE_RTOL * max(1.0, cycles):
        raise LeakageError(f"window holds {cycles:.12g} periods of omega={omega:g}; need a whole number")
    t = t0 + np.arange(n) * sample_period
    return complex(2j / n * np.sum(v * np.exp(-1j * omega * t)))


def brute_force_impedance(
    dae: DaeSystem,
    soc: float,
    omega: float,
    amplitude: float = 0.1,
    n_periods: int = 10,
    n_discard: int = 5,
    tol: float = 1e-9,
    samples_per_period: int = 64,
) -> complex:
    """Z = V(omega) / I(omega) from a simulated sine sweep at one frequency [Ohm]."""
    if not amplitude > 0.0:
        raise ParameterDomainError("amplitude", amplitude, "must be > 0")
    if not 0 <= n_discard < n_periods:
        raise ParameterDomainError("n_discard", n_discard, f"must lie in [0, n_periods={n_periods})")
    if samples_per_period < 64:
        raise ParameterDomainError("samples_per_period", samples_per_period, "need at least 64 samples per period")
    if not omega > 0.0:
        raise ParameterDomainError("omega", omega, "must be > 0")

    f_hz = omega / (2.0 * math.pi)
    period = 1.0 / f_hz
    dt = period / samples_per_period
    n_kept = (n_periods - n_discard) * samples_per_period
    t_start = n_discard * period
    times = t_start + np.arange(n_kept) * dt

    x0 = np.asarray(equilibrium_state(dae, soc), dtype=float)
    profile = sinusoid_profile(amplitude, f_hz, n_periods)
    traj = integrate(dae, x0, profile, times, tol, store_states=False, max_step=dt)

    v_hat = dft_bin(traj.voltage, omega, dt, t0=t_start)
    i_hat = dft_bin(traj.current, omega, dt, t0=t_start)
    z = v_hat / i_hat
    logger.debug(
        "Brute force at f=%g Hz, soc=%g: Z=%s (%d steps, %d rejected)",
        f_hz, soc, z, traj.stats.n_steps, traj.stats.n_rejected,
    )
    return z


def brute_force_spectrum(
    dae: DaeSystem,
    soc: float,
    grid: FrequencyGrid | Sequence[float],
    dispatcher: JobDispatcher | None = None,
    **protocol,
) -> Spectrum:
    """Brute-force impedance at every grid frequency; frequencies run independently."""
    grid = grid if isinstance(grid, FrequencyGrid) else FrequencyGrid(np.asarray(grid, dtype=float))
    logger.info("=== [BRUTEFORCE] soc=%g, %d frequencies ===", soc, len(grid))
    job = partial(_brute_force_job, dae, soc, protocol)
    omegas = [float(w) for w in grid.omega]
    z = dispatcher.map(job, omegas) if dispatcher is not None else [job(w) for w in omegas]
    temperature = getattr(getattr(dae.model, "params", None), "temperature", 298.15)
    return Spectrum(soc=soc, f_hz=grid.f_hz.copy(), z=np.asarray(z), temperature=temperature)


def _brute_force_job(dae: DaeSystem, soc: float, protocol: dict, omega: float) -> complex:
    return brute_force_impedance(dae, soc, omega, **protocol)
