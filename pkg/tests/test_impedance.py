import math

import numpy as np
import pytest

from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import (
    ArcNotResolvedError,
    GridMismatchError,
    ImpedanceSolveError,
    ParameterDomainError,
    UnknownParameterError,
)
from spme_eis.impedance import (
    FrequencyGrid,
    ImpedanceDataset,
    Spectrum,
    high_frequency_intercept,
    impedance_at,
    semicircle_diameter,
    sensitivity_sweep,
    spectrum,
    spectrum_at_soc,
    sweep_factors,
)
from spme_eis.model.dae import assemble_dae, equilibrium_state
from spme_eis.model.parameters import charge_transfer_resistance
from tests.conftest import rc_dae, resistor_dae


# ---------------------------------------------------------------------------
# Frequency grids and containers
# ---------------------------------------------------------------------------


def test_per_decade_grid():
    grid = FrequencyGrid.per_decade(4e-4, 1e3, 10)
    assert len(grid) == 65
    assert grid.f_hz[0] == 4e-4 and grid.f_hz[-1] == 1e3
    assert np.all(np.diff(grid.f_hz) > 0.0)


def test_from_omega():
    grid = FrequencyGrid.from_omega([2 * math.pi, 4 * math.pi])
    np.testing.assert_allclose(grid.f_hz, [1.0, 2.0])
    np.testing.assert_allclose(grid.omega, [2 * math.pi, 4 * math.pi])


@pytest.mark.parametrize("f", [[1.0, 1.0], [2.0, 1.0], [0.0, 1.0], [-1.0, 1.0], []])
def test_bad_grids(f):
    with pytest.raises(ParameterDomainError):
        FrequencyGrid(np.array(f))


def test_bad_band():
    with pytest.raises(ParameterDomainError):
        FrequencyGrid.per_decade(10.0, 1.0, 10)


def test_spectrum_shape_mismatch():
    with pytest.raises(GridMismatchError):
        Spectrum(50, np.array([1.0, 2.0]), np.array([1.0 + 0j]))


def test_dataset_sorted_and_distinct():
    a = Spectrum(70, np.array([1.0]), np.array([1.0 + 0j]))
    b = Spectrum(30, np.array([1.0]), np.array([2.0 + 0j]))
    ds = ImpedanceDataset([a, b])
    assert ds.socs == [30, 70]
    assert ds.spectrum_at(70) is a
    assert ds.n_points == 2
    with pytest.raises(ParameterDomainError):
        ImpedanceDataset([a, a])


# ---------------------------------------------------------------------------
# Analytic circuits
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("omega", [0.1, 10.0, 100.0, 1e4])
def test_rc_impedance(omega):
    r, c, r0 = 0.01, 1.0, 0.002
    dae = rc_dae(r, c, r0)
    z = impedance_at(dae, equilibrium_state(dae, 50), omega)
    assert z == pytest.approx(r0 + r / (1 + 1j * omega * r * c), rel=1e-12)


def test_resistor_is_frequency_independent():
    dae = resistor_dae(0.015)
    s = spectrum_at_soc(dae, FrequencyGrid.logspace(1e-3, 1e3, 7), 50)
    np.testing.assert_allclose(s.z, 0.015, rtol=1e-12)
    assert high_frequency_intercept(s) == pytest.approx(0.015)


def test_zero_frequency_rejected():
    dae = rc_dae()
    with pytest.raises(ImpedanceSolveError):
        impedance_at(dae, equilibrium_state(dae, 50), 0.0)


def test_rc_semicircle_diameter():
    dae = rc_dae(0.01, 1.0)
    s = spectrum_at_soc(dae, FrequencyGrid.per_decade(1e-2, 1e3, 10), 50)
    assert semicircle_diameter(s) == pytest.approx(0.01, rel=0.02)


def test_arc_not_resolved_without_peak():
    s = spectrum_at_soc(resistor_dae(0.01), FrequencyGrid.logspace(1e-2, 1e2, 5), 50)
    with pytest.raises(ArcNotResolvedError):
        semicircle_diameter(s)


# ---------------------------------------------------------------------------
# Cell model
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("soc", [5, 50, 95])
def test_coarse_spectrum_real_part_positive(coarse_dae, soc):
    s = spectrum_at_soc(coarse_dae, FrequencyGrid.per_decade(2e-4, 1e3, 10), soc)
    assert np.all(s.z.real > 0.0)


class TestCellSpectrum:
    @pytest.fixture(autouse=True)
    def _system(self, params, curves, medium_mesh):
        self.params = params
        self.dae = assemble_dae(params, curves, medium_mesh)
        self.grid = FrequencyGrid.per_decade(2e-4, 1e3, 10)

    def test_high_frequency_intercept_near_series_resistance(self):
        s = spectrum_at_soc(self.dae, self.grid, 50)
        assert high_frequency_intercept(s) == pytest.approx(self.params.r0, abs=5e-4)

    def test_capacitive_everywhere(self):
        s = spectrum_at_soc(self.dae, self.grid, 50)
        assert np.all(s.z.imag < 0.0)
        assert np.all(s.z.real > 0.0)

    @pytest.mark.parametrize("omega", [1e-3, 0.7, 50.0, 3e3])
    def test_negative_frequency_gives_conjugate(self, omega):
        x = equilibrium_state(self.dae, 50)
        z = impedance_at(self.dae, x, omega)
        assert impedance_at(self.dae, x, -omega) == pytest.approx(np.conj(z), rel=1e-12)

    def test_arc_matches_charge_transfer_estimate(self):
        s = spectrum_at_soc(self.dae, self.grid, 50)
        expected = sum(charge_transfer_resistance(self.params, 50))
        assert semicircle_diameter(s) == pytest.approx(expected, rel=0.15)

    def test_arc_grows_toward_soc_ends(self):
        ds = spectrum(self.dae, [10, 50, 90], self.grid)
        d10, d50, d90 = (semicircle_diameter(s) for s in ds)
        assert d10 > d50 and d90 > d50

    def test_dataset_matches_single_soc(self):
        ds = spectrum(self.dae, [80, 20], self.grid)
        assert ds.socs == [20, 80]
        np.testing.assert_array_equal(ds.spectrum_at(80).z, spectrum_at_soc(self.dae, self.grid, 80).z)

    def test_dispatched_spectra_identical(self):
        grid = FrequencyGrid.logspace(1e-2, 1e2, 5)
        serial = spectrum(self.dae, [30, 60], grid)
        parallel = spectrum(self.dae, [30, 60], grid, JobDispatcher(workers=2))
        for a, b in zip(serial, parallel):
            np.testing.assert_array_equal(a.z, b.z)


# ---------------------------------------------------------------------------
# Sensitivity sweeps
# ---------------------------------------------------------------------------


class TestSweep:
    @pytest.fixture(autouse=True)
    def _setup(self, params, curves, medium_mesh):
        self.params = params
        self.curves = curves
        self.mesh = medium_mesh
        # 1e-3 .. 1e2 Hz at half-decade spacing, index 2 is 0.01 Hz
        self.grid = FrequencyGrid.logspace(1e-3, 1e2, 11)

    def _sweep(self, name, n_steps=3, soc=50):
        return sensitivity_sweep(self.params, self.curves, self.mesh, name, n_steps, soc, self.grid)

    def test_factors_and_nominal(self):
        points = self._sweep("tau_d_pos", n_steps=5)
        factors = [p.factor for p in points]
        assert factors[0] == 0.5 and factors[-1] == 2.0 and factors[2] == 1.0
        assert [p.is_nominal for p in points] == [False, False, True, False, False]
        assert points[2].value == self.params.tau_d_pos

    def test_even_sweep_keeps_nominal(self):
        points = self._sweep("r0", n_steps=4)
        assert len(points) == 4
        assert sum(p.is_nominal for p in points) == 1
        assert [p.factor for p in points] == pytest.approx([0.5, 1.0, 2.0 ** 0.5, 2.0])
        nominal = next(p for p in points if p.is_nominal)
        assert nominal.value == self.params.r0

    @pytest.mark.parametrize("n_steps", [3, 4, 6, 7])
    def test_sweep_factors_span_and_order(self, n_steps):
        factors = sweep_factors(n_steps)
        assert factors.size == n_steps
        assert factors[0] == 0.5 and factors[-1] == 2.0
        assert np.count_nonzero(factors == 1.0) == 1
        assert np.all(np.diff(factors) > 0.0)

    def test_series_resistance_shifts_real_part(self):
        low, mid, high = self._sweep("r0")
        delta = high.spectrum.z - low.spectrum.z
        np.testing.assert_allclose(delta.real, 1.5 * self.params.r0, rtol=1e-9)
        np.testing.assert_allclose(delta.imag, 0.0, atol=1e-12)

    def test_plateau_hides_negative_diffusion(self):
        neg = self._sweep("tau_d_neg")
        pos = self._sweep("tau_d_pos")

        def spread(points):
            z = np.array([abs(p.spectrum.z[2]) for p in points])
            return float(np.max(np.abs(z - z[1])) / z[1])

        assert spread(neg) < 0.02
        assert spread(neg) < 0.2 * spread(pos)

    def test_capacity_scales_kinetic_resistance(self):
        grid = FrequencyGrid(np.array([1.0]))
        points = sensitivity_sweep(self.params, self.curves, self.mesh, "q_meas", 3, 50, grid)
        low, _, high = (abs(p.spectrum.z[0] - self.params.r0) for p in points)
        assert 3.0 < low / high < 5.0

    def test_unknown_parameter(self):
        with pytest.raises(UnknownParameterError):
            self._sweep("sto_pos_7")

    @pytest.mark.parametrize("n_steps", [1, 2])
    def test_too_few_steps(self, n_steps):
        with pytest.raises(ParameterDomainError):
            self._sweep("r0", n_steps=n_steps)
