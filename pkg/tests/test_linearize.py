import tempfile
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from spme_eis.errors import ParameterDomainError
from spme_eis.linearize import DISCREPANCY_FLOOR, dump_coo, fd_jacobian, jacobian, relative_discrepancy
from spme_eis.model.dae import ModelMode, assemble_dae, equilibrium_state


def _perturbed(dae, soc=50, seed=3):
    """A non-stationary state: graded particles and electrolyte, non-zero current."""
    rng = np.random.default_rng(seed)
    x = np.array(equilibrium_state(dae, soc))
    lay = dae.layout
    n_r = lay.mesh.n_r
    x[lay.c_neg] += 0.01 * np.linspace(-1.0, 1.0, n_r)
    x[lay.c_pos] -= 0.01 * np.linspace(-1.0, 1.0, n_r)
    x[lay.ce] += 0.05 * rng.uniform(-1.0, 1.0, lay.n_e)
    x[lay.v_bar_pos] += 0.003
    x[lay.v_bar_neg] -= 0.002
    x[lay.current] = -2.0
    return x


@pytest.mark.parametrize("mode", [ModelMode.SPME, ModelMode.SPM])
def test_exact_matches_finite_differences(params, curves, coarse_mesh, mode):
    dae = assemble_dae(params, curves, coarse_mesh, mode)
    x = _perturbed(dae)
    assert relative_discrepancy(jacobian(dae, x), fd_jacobian(dae, x)) < 1e-6


def test_exact_matches_finite_differences_at_rest(coarse_dae):
    x = equilibrium_state(coarse_dae, 20)
    assert relative_discrepancy(jacobian(coarse_dae, x), fd_jacobian(coarse_dae, x)) < 1e-6


def test_sparsity_pattern_independent_of_state(coarse_dae):
    a = jacobian(coarse_dae, equilibrium_state(coarse_dae, 50))
    b = jacobian(coarse_dae, _perturbed(coarse_dae))
    assert a.nnz == b.nnz
    np.testing.assert_array_equal(a.indices, b.indices)
    np.testing.assert_array_equal(a.indptr, b.indptr)


def test_jacobian_is_sparse(params, curves, medium_mesh):
    dae = assemble_dae(params, curves, medium_mesh)
    jac = jacobian(dae, equilibrium_state(dae, 50))
    assert jac.nnz < 0.2 * dae.size ** 2


@pytest.mark.parametrize("h", [1e-10, 1e-2])
def test_fd_step_range(coarse_dae, h):
    with pytest.raises(ParameterDomainError):
        fd_jacobian(coarse_dae, equilibrium_state(coarse_dae, 50), h=h)


def test_relative_discrepancy_is_entrywise():
    exact = sp.csr_matrix(np.array([[100.0, 1.0], [0.0, 1e-3]]))
    approx = sp.csr_matrix(np.array([[100.0, 1.5], [0.0, 1e-3]]))
    assert relative_discrepancy(exact, approx) == pytest.approx(0.5)
    assert relative_discrepancy(exact, exact) == 0.0


def test_relative_discrepancy_flags_small_entry_beside_large_diagonal():
    exact = sp.csr_matrix(np.array([[1e6, 1.0]]))
    approx = sp.csr_matrix(np.array([[1e6, 1.5]]))
    assert relative_discrepancy(exact, approx) == pytest.approx(0.5 / (DISCREPANCY_FLOOR * 1e6))
    assert relative_discrepancy(exact, approx) > 1e-6


def test_relative_discrepancy_covers_union_pattern():
    exact = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 0.0]]))
    approx = sp.csr_matrix(np.array([[2.0, 1e-3], [0.0, 1e-3]]))
    # zero in exact: first row uses the row floor, the empty row an absolute one
    assert relative_discrepancy(exact, approx) == pytest.approx(1e-3 / (DISCREPANCY_FLOOR * 2.0))
    assert relative_discrepancy(exact, sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 1e-3]]))) == pytest.approx(1e-3)


# ---------------------------------------------------------------------------
# Coordinate dump
# ---------------------------------------------------------------------------


class TestDumpCoo:
    def setup_method(self):
        self._tmpdir = tempfile.TemporaryDirectory()
        self.path = Path(self._tmpdir.name) / "jac.txt"

    def teardown_method(self):
        self._tmpdir.cleanup()

    def test_writes_every_entry(self, coarse_dae):
        jac = jacobian(coarse_dae, equilibrium_state(coarse_dae, 50))
        dump_coo(jac, self.path)
        lines = self.path.read_text().splitlines()
        assert lines[0] == "# row, col, value"
        assert len(lines) == jac.nnz + 1

    def test_values_are_exact(self):
        m = sp.csr_matrix(np.array([[0.0, 1.0 / 3.0], [2.5, 0.0]]))
        dump_coo(m, self.path)
        rows = [line.split(", ") for line in self.path.read_text().splitlines()[1:]]
        back = sp.coo_matrix(
            ([float(v) for _, _, v in rows], ([int(r) for r, _, _ in rows], [int(c) for _, c, _ in rows])),
            shape=(2, 2),
        )
        assert (back != m).nnz == 0


def test_default_mesh_random_states(params, curves):
    dae = assemble_dae(params, curves)
    worst = 0.0
    for seed in range(10):
        x = _perturbed(dae, soc=20 + 6 * seed, seed=seed)
        worst = max(worst, relative_discrepancy(jacobian(dae, x), fd_jacobian(dae, x)))
    assert worst < 1e-6
