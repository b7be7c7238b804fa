import numpy as np
import pytest
import scipy.sparse as sp

from spme_eis.model.dae import DaeSystem, Mesh, ModelMode, assemble_dae
from spme_eis.model.ocp import synthetic_curves
from spme_eis.model.parameters import reference_grouped


class RcModel:
    """Parallel R-C in series with r0, plus an OCV offset: states [u, v, i]."""

    def __init__(self, r: float, c: float, r0: float = 0.0, ocv: float = 3.7) -> None:
        self.r, self.c, self.r0, self.ocv = r, c, r0, ocv

    def residual(self, x):
        u, v, i = x
        return np.array([i - u / self.r, self.ocv + u + self.r0 * i - v, -i])

    def jacobian(self, x):
        return sp.csr_matrix(np.array([
            [-1.0 / self.r, 0.0, 1.0],
            [1.0, -1.0, self.r0],
            [0.0, 0.0, -1.0],
        ]))

    def equilibrium(self, soc):
        return np.array([0.0, self.ocv, 0.0])


class ResistorModel:
    """Pure series resistance: states [v, i], no dynamics."""

    def __init__(self, r0: float) -> None:
        self.r0 = r0

    def residual(self, x):
        v, i = x
        return np.array([self.r0 * i - v, -i])

    def jacobian(self, x):
        return sp.csr_matrix(np.array([[-1.0, self.r0], [0.0, -1.0]]))

    def equilibrium(self, soc):
        return np.zeros(2)


def rc_dae(r: float = 0.01, c: float = 1.0, r0: float = 0.0) -> DaeSystem:
    return DaeSystem(
        model=RcModel(r, c, r0),
        mass_matrix=sp.diags([c, 0.0, 0.0]).tocsr(),
        input_vector=np.array([0.0, 0.0, 1.0]),
    )


def resistor_dae(r0: float) -> DaeSystem:
    return DaeSystem(
        model=ResistorModel(r0),
        mass_matrix=sp.csr_matrix((2, 2)),
        input_vector=np.array([0.0, 1.0]),
    )


@pytest.fixture
def params():
    return reference_grouped()


@pytest.fixture
def curves():
    return synthetic_curves()


@pytest.fixture
def coarse_mesh():
    return Mesh(n_r=10, n_x_neg=6, n_sep=4, n_x_pos=6)


@pytest.fixture
def medium_mesh():
    return Mesh(n_r=30, n_x_neg=20, n_sep=8, n_x_pos=20)


@pytest.fixture
def coarse_dae(params, curves, coarse_mesh):
    return assemble_dae(params, curves, coarse_mesh, ModelMode.SPME)
