import math

import numpy as np
import pytest

from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import LeakageError, ParameterDomainError
from spme_eis.impedance import FrequencyGrid, impedance_at, spectrum_at_soc
from spme_eis.model.dae import equilibrium_state
from spme_eis.simulate.bruteforce import brute_force_impedance, brute_force_spectrum, dft_bin
from tests.conftest import rc_dae


# ---------------------------------------------------------------------------
# Fourier bin
# ---------------------------------------------------------------------------


def _sampled(fn, f_hz=2.0, n_periods=3, spp=64, t0=0.0):
    dt = 1.0 / (f_hz * spp)
    t = t0 + np.arange(n_periods * spp) * dt
    return fn(t), 2.0 * math.pi * f_hz, dt


def test_sine_has_unit_coefficient():
    v, omega, dt = _sampled(lambda t: np.sin(4.0 * math.pi * t))
    assert dft_bin(v, omega, dt) == pytest.approx(1.0 + 0j, abs=1e-12)


def test_phase_and_amplitude():
    v, omega, dt = _sampled(lambda t: 0.3 * np.sin(4.0 * math.pi * t + 0.7))
    c = dft_bin(v, omega, dt)
    assert abs(c) == pytest.approx(0.3, rel=1e-12)
    assert np.angle(c) == pytest.approx(0.7, abs=1e-12)


def test_cosine_leads_by_quarter_period():
    v, omega, dt = _sampled(lambda t: np.cos(4.0 * math.pi * t))
    assert dft_bin(v, omega, dt) == pytest.approx(1j, abs=1e-12)


def test_offset_and_harmonics_vanish():
    v, omega, dt = _sampled(lambda t: 3.7 + 0.2 * np.sin(8.0 * math.pi * t) + np.sin(4.0 * math.pi * t))
    assert dft_bin(v, omega, dt) == pytest.approx(1.0 + 0j, abs=1e-12)


def test_window_start_sets_time_origin():
    t0 = 5.0 / 2.0
    v, omega, dt = _sampled(lambda t: np.sin(4.0 * math.pi * t + 0.2), t0=t0)
    assert np.angle(dft_bin(v, omega, dt, t0=t0)) == pytest.approx(0.2, abs=1e-12)


def test_fractional_window_leaks():
    v, omega, dt = _sampled(lambda t: np.sin(4.0 * math.pi * t))
    with pytest.raises(LeakageError):
        dft_bin(v[:-5], omega, dt)


def test_empty_samples():
    with pytest.raises(ParameterDomainError):
        dft_bin([], 1.0, 0.1)


# ---------------------------------------------------------------------------
# Time-domain impedance
# ---------------------------------------------------------------------------


def test_rc_brute_force_matches_analytic():
    r, c, r0 = 0.01, 1.0, 0.002
    dae = rc_dae(r, c, r0)
    omega = 2.0 * math.pi
    z = brute_force_impedance(dae, 50, omega)
    expected = r0 + r / (1.0 + 1j * omega * r * c)
    assert abs(z - expected) / abs(expected) < 1e-3


@pytest.mark.parametrize("f_hz", [1.0, 10.0])
def test_cell_brute_force_matches_linearization(coarse_dae, f_hz):
    omega = 2.0 * math.pi * f_hz
    z_lin = impedance_at(coarse_dae, equilibrium_state(coarse_dae, 50), omega)
    z_bf = brute_force_impedance(coarse_dae, 50, omega)
    assert abs(z_bf - z_lin) / abs(z_lin) < 5e-3


def test_spectrum_over_grid():
    dae = rc_dae(0.01, 1.0)
    grid = FrequencyGrid(np.array([0.5, 2.0, 10.0]))
    bf = brute_force_spectrum(dae, 50, grid, n_periods=6, n_discard=3)
    lin = spectrum_at_soc(dae, grid, 50)
    np.testing.assert_allclose(bf.z, lin.z, rtol=2e-3)
    np.testing.assert_array_equal(bf.f_hz, grid.f_hz)


def test_dispatched_spectrum_identical():
    dae = rc_dae(0.01, 1.0)
    protocol = {"n_periods": 4, "n_discard": 2}
    serial = brute_force_spectrum(dae, 50, [5.0, 50.0], **protocol)
    parallel = brute_force_spectrum(dae, 50, [5.0, 50.0], JobDispatcher(workers=2), **protocol)
    np.testing.assert_array_equal(serial.z, parallel.z)


@pytest.mark.parametrize("kwargs", [
    {"amplitude": 0.0},
    {"n_periods": 5, "n_discard": 5},
    {"n_discard": -1},
    {"samples_per_period": 32},
])
def test_protocol_validation(kwargs):
    with pytest.raises(ParameterDomainError):
        brute_force_impedance(rc_dae(), 50, 1.0, **kwargs)
