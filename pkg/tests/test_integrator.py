import math

import numpy as np
import pytest

from spme_eis.errors import ParameterDomainError, SolverError
from spme_eis.model.dae import Mesh, assemble_dae, coulomb_content, equilibrium_state
from spme_eis.simulate.integrator import BdfIntegrator, integrate
from spme_eis.simulate.profile import Constant, CurrentProfile, rest_discharge_charge_protocol, sample_times
from tests.conftest import rc_dae


# ---------------------------------------------------------------------------
# Circuit with a closed-form response
# ---------------------------------------------------------------------------


class TestRcStep:
    r, c, r0, amps = 0.01, 1.0, 0.005, 1.0
    t_step = 0.1

    def setup_method(self):
        self.dae = rc_dae(self.r, self.c, self.r0)
        self.profile = CurrentProfile([Constant(self.t_step, 0.0), Constant(0.2, self.amps)])
        self.x0 = np.array(equilibrium_state(self.dae, 50))

    def _expected(self, t):
        tau = self.r * self.c
        u = np.where(t >= self.t_step, self.amps * self.r * (1.0 - np.exp(-(t - self.t_step) / tau)), 0.0)
        i = np.where(t >= self.t_step, self.amps, 0.0)
        return 3.7 + u + self.r0 * i

    def test_step_response(self):
        t = np.array([0.0, 0.05, 0.105, 0.11, 0.12, 0.15, 0.2, 0.3])
        traj = integrate(self.dae, self.x0, self.profile, t, tol=1e-9)
        np.testing.assert_allclose(traj.voltage, self._expected(t), atol=1e-6)
        np.testing.assert_array_equal(traj.t, t)
        assert len(traj) == t.size

    def test_output_at_breakpoint_is_reinitialized(self):
        traj = integrate(self.dae, self.x0, self.profile, [0.0, self.t_step, 0.2])
        assert traj.current[1] == self.amps
        assert traj.voltage[1] == pytest.approx(3.7 + self.r0 * self.amps, abs=1e-12)
        assert traj.stats.n_reinit >= 1

    def test_initial_state_returned_exactly(self):
        traj = integrate(self.dae, self.x0, self.profile, [0.0, 0.2])
        np.testing.assert_array_equal(traj.states[0], self.x0)

    def test_states_can_be_dropped(self):
        traj = integrate(self.dae, self.x0, self.profile, [0.0, 0.2], store_states=False)
        assert traj.states is None

    def test_inconsistent_start_rejected(self):
        x0 = self.x0.copy()
        x0[1] = 0.0
        with pytest.raises(SolverError):
            integrate(self.dae, x0, self.profile, [0.0, 0.2])

    def test_current_at_start_needs_reinitialization(self):
        profile = CurrentProfile([Constant(0.1, self.amps)])
        with pytest.raises(SolverError):
            integrate(self.dae, self.x0, profile, [0.0, 0.1])
        traj = integrate(self.dae, self.x0, profile, [0.0, 0.1], reinitialize=True)
        assert traj.voltage[0] == pytest.approx(3.7 + self.r0 * self.amps)

    def test_max_step_bounds_step_count(self):
        solver = BdfIntegrator(self.dae, self.profile, atol=1e-6, max_step=0.01)
        solver.run(self.x0, [0.0, 0.3])
        assert solver.stats.n_steps >= 30


@pytest.mark.parametrize("out", [[], [0.5, 0.2], [-1.0, 0.1], [0.0, 10.0]])
def test_bad_output_times(out):
    dae = rc_dae()
    profile = CurrentProfile([Constant(1.0, 0.0)])
    with pytest.raises(ParameterDomainError):
        integrate(dae, equilibrium_state(dae, 50), profile, out)


def test_non_positive_tolerance():
    dae = rc_dae()
    with pytest.raises(ParameterDomainError):
        BdfIntegrator(dae, CurrentProfile([Constant(1.0, 0.0)]), atol=0.0)


# ---------------------------------------------------------------------------
# Cell model
# ---------------------------------------------------------------------------


def test_rest_is_stationary(coarse_dae):
    x0 = np.array(equilibrium_state(coarse_dae, 50))
    profile = CurrentProfile([Constant(1e4, 0.0)])
    traj = integrate(coarse_dae, x0, profile, [0.0, 5e3, 1e4])
    assert np.max(np.abs(traj.states - x0)) < 1e-8


def test_discharge_bookkeeping(params, curves, coarse_mesh):
    """Constant discharge with the double layer switched off."""
    g = params.updated(c_dl_pos=0.0, c_dl_neg=0.0)
    dae = assemble_dae(g, curves, coarse_mesh)
    profile = CurrentProfile([Constant(10.0, 0.0), Constant(3180.0, -5.0)])
    traj = integrate(dae, equilibrium_state(dae, 90), profile, [0.0, 10.0, 3190.0], tol=1e-8)
    start, end = traj.states[1], traj.states[2]

    lithiation = dae.model.particle_average(end, "pos") - dae.model.particle_average(start, "pos")
    assert g.q_th_pos * lithiation == pytest.approx(15900.0, rel=1e-3)

    lithium_before, electrolyte_before = coulomb_content(dae, traj.states[0])
    lithium_after, electrolyte_after = coulomb_content(dae, end)
    assert lithium_after == pytest.approx(lithium_before, rel=1e-6)
    assert electrolyte_after == pytest.approx(electrolyte_before, rel=1e-6)

    assert traj.voltage[2] < traj.voltage[1] - 0.1
    assert traj.current[2] == -5.0


@pytest.mark.slow
def test_discharge_charge_protocol(params, curves, medium_mesh):
    dae = assemble_dae(params, curves, medium_mesh)
    profile = rest_discharge_charge_protocol()
    t = sample_times(profile)
    traj = integrate(dae, equilibrium_state(dae, 95), profile, t, tol=1e-6, store_states=False)
    v = traj.voltage
    assert np.all(np.isfinite(v))
    assert v[359] < v[0]
    # relaxation in the final rest slows down
    assert abs(v[-1] - v[-2]) < abs(v[601] - v[600])
    assert v[-1] > v[479]


@pytest.mark.slow
def test_tighter_tolerance_converges(params, curves):
    dae = assemble_dae(params, curves, Mesh(20, 10, 4, 10))
    profile = CurrentProfile([Constant(10.0, 0.0), Constant(600.0, -5.0)])
    t = np.arange(0.0, 610.0, 10.0)
    x0 = equilibrium_state(dae, 60)
    loose = integrate(dae, x0, profile, t, tol=1e-6).voltage
    tight = integrate(dae, x0, profile, t, tol=1e-10).voltage
    assert np.max(np.abs(loose - tight)) < 1e-3
    assert not math.isnan(tight[-1])
