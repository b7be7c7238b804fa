"""Finite-volume assembly of the grouped SPMe into ``M dx/dt = F(x) + B i``.

State order: ``[c_-(r), c_+(r), c_e(x), vbar_-, vbar_+, v, i]``. Particle
concentrations live on uniform radial cells with the r^2 metric so that
``3 * sum(V_i c_i)`` (the particle average) is conserved exactly. The
electrolyte uses cell-centred volumes with harmonic face transport. The
last two rows are algebraic: the terminal-voltage relation and ``-i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from spme_eis.errors import MeshError, ParameterDomainError, StoichiometryGuardError
from spme_eis.model.ocp import OcpCurve
from spme_eis.model.parameters import GroupedParameters, stoichiometry_at_soc

logger = logging.getLogger(__name__)

SURFACE_GUARD = 1e-6


class ModelMode(StrEnum):
    SPME = "spme"
    SPM = "spm"


@dataclass(frozen=True)
class Mesh:
    n_r: int = 100
    n_x_neg: int = 100
    n_sep: int = 20
    n_x_pos: int = 100

    def __post_init__(self) -> None:
        for name in ("n_r", "n_x_neg", "n_sep", "n_x_pos"):
            value = getattr(self, name)
            if int(value) != value or value < 2:
                raise MeshError(f"mesh.{name}={value!r}: every region needs at least 2 cells")

    @property
    def n_x(self) -> int:
        return self.n_x_neg + self.n_sep + self.n_x_pos


@dataclass(frozen=True)
class StateLayout:
    mesh: Mesh
    mode: ModelMode = ModelMode.SPME

    @property
    def n_e(self) -> int:
        return self.mesh.n_x if self.mode == ModelMode.SPME else 0

    @property
    def c_neg(self) -> slice:
        return slice(0, self.mesh.n_r)

    @property
    def c_pos(self) -> slice:
        return slice(self.mesh.n_r, 2 * self.mesh.n_r)

    @property
    def ce(self) -> slice:
        start = 2 * self.mesh.n_r
        return slice(start, start + self.n_e)

    @property
    def v_bar_neg(self) -> int:
        return 2 * self.mesh.n_r + self.n_e

    @property
    def v_bar_pos(self) -> int:
        return self.v_bar_neg + 1

    @property
    def voltage(self) -> int:
        return self.v_bar_neg + 2

    @property
    def current(self) -> int:
        return self.v_bar_neg + 3

    @property
    def size(self) -> int:
        return self.v_bar_neg + 4

    def describe(self) -> dict[str, slice | int]:
        return {
            "c_neg": self.c_neg,
            "c_pos": self.c_pos,
            "ce": self.ce,
            "v_bar_neg": self.v_bar_neg,
            "v_bar_pos": self.v_bar_pos,
            "voltage": self.voltage,
            "current": self.current,
        }


class DaeModel(Protocol):
    """Anything that can drive a :class:`DaeSystem`."""

    def residual(self, x: np.ndarray) -> np.ndarray: ...

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix: ...

    def equilibrium(self, soc: float) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class DaeSystem:
    model: DaeModel
    mass_matrix: sp.csr_matrix
    input_vector: np.ndarray
    layout: StateLayout | None = None
    mode: str = ModelMode.SPME

    @property
    def size(self) -> int:
        return self.mass_matrix.shape[0]

    @property
    def voltage_index(self) -> int:
        return self.size - 2

    @property
    def current_index(self) -> int:
        return self.size - 1

    @property
    def algebraic_mask(self) -> np.ndarray:
        return np.asarray(abs(self.mass_matrix).sum(axis=1)).ravel() == 0.0

    def residual(self, x) -> np.ndarray:
        return self.model.residual(np.asarray(x, dtype=float))

    def rhs(self, x, current: float) -> np.ndarray:
        """F(x) + B i."""
        return self.residual(x) + self.input_vector * current

    def jacobian(self, x) -> sp.csr_matrix:
        return self.model.jacobian(np.asarray(x, dtype=float))

    def view(self, x) -> StateVector:
        if self.layout is None:
            raise ParameterDomainError("layout", None, "this system has no named state layout")
        return StateVector(np.asarray(x, dtype=float), self.layout)


@dataclass(frozen=True, eq=False)
class StateVector:
    values: np.ndarray
    layout: StateLayout

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return self.values.size

    @property
    def c_neg(self) -> np.ndarray:
        return self.values[self.layout.c_neg]

    @property
    def c_pos(self) -> np.ndarray:
        return self.values[self.layout.c_pos]

    @property
    def ce(self) -> np.ndarray:
        return self.values[self.layout.ce]

    @property
    def v_bar_neg(self) -> float:
        return float(self.values[self.layout.v_bar_neg])

    @property
    def v_bar_pos(self) -> float:
        return float(self.values[self.layout.v_bar_pos])

    @property
    def voltage(self) -> float:
        return float(self.values[self.layout.voltage])

    @property
    def current(self) -> float:
        return float(self.values[self.layout.current])


@dataclass(frozen=True)
class Auxiliary:
    """Per-cell interface quantities of one state (positive first, then negative)."""

    j_pos: np.ndarray
    j_neg: np.ndarray
    i0_pos: np.ndarray
    i0_neg: np.ndarray
    eta_pos: np.ndarray
    eta_neg: np.ndarray
    j_bar_pos: float
    j_bar_neg: float
    c_surf_pos: float
    c_surf_neg: float
    electrolyte_flux: np.ndarray
    eta_e: float


@dataclass(frozen=True)
class _Kinetics:
    c_surf: float
    i0: np.ndarray
    eta: np.ndarray
    sinh: np.ndarray
    cosh: np.ndarray
    j: np.ndarray
    j_bar: float
    log_ce: np.ndarray


@dataclass(frozen=True, eq=False)
class _Electrode:
    sign: float  # +1 positive, -1 negative
    tag: str
    curve: OcpCurve
    tau_ct: float
    q_th: float
    ell: float
    particle: slice
    ce_cells: np.ndarray  # local electrolyte indices, empty in SPM mode
    weights: np.ndarray
    v_bar: int
    source_scale: float


class SpmeModel:
    """Residual and exact Jacobian of the discretized grouped SPMe/SPM."""

    def __init__(
        self,
        params: GroupedParameters,
        curves: tuple[OcpCurve, OcpCurve],
        mesh: Mesh,
        mode: ModelMode = ModelMode.SPME,
    ) -> None:
        self.params = params
        self.curves = curves
        self.mesh = mesh
        self.mode = ModelMode(mode)
        self.layout = StateLayout(mesh, self.mode)
        constants = params.constants()
        self.kappa = constants.thermal_voltage
        self.k_t = self.kappa * (1.0 - params.t_plus)

        n_r = mesh.n_r
        dr = 1.0 / n_r
        edges = np.arange(n_r + 1) * dr
        self.shell_volume = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
        self._radial_face = {
            "pos": edges[1:-1] ** 2 / (params.tau_d_pos * dr),
            "neg": edges[1:-1] ** 2 / (params.tau_d_neg * dr),
        }

        self._build_electrolyte()
        ce_neg = np.arange(mesh.n_x_neg) if self.mode == ModelMode.SPME else np.zeros(0, dtype=int)
        ce_pos = (
            np.arange(mesh.n_x - mesh.n_x_pos, mesh.n_x) if self.mode == ModelMode.SPME else np.zeros(0, dtype=int)
        )
        self.electrodes = {
            "pos": _Electrode(
                sign=1.0,
                tag="pos",
                curve=curves[0],
                tau_ct=params.tau_ct_pos,
                q_th=params.q_th_pos,
                ell=params.ell_pos,
                particle=self.layout.c_pos,
                ce_cells=ce_pos,
                weights=self.cell_width[ce_pos] / params.ell_pos if ce_pos.size else np.ones(1),
                v_bar=self.layout.v_bar_pos,
                source_scale=3.0 * params.q_th_pos / (params.q_e * params.ell_pos),
            ),
            "neg": _Electrode(
                sign=-1.0,
                tag="neg",
                curve=curves[1],
                tau_ct=params.tau_ct_neg,
                q_th=params.q_th_neg,
                ell=params.ell_neg,
                particle=self.layout.c_neg,
                ce_cells=ce_neg,
                weights=self.cell_width[ce_neg] / params.ell_neg if ce_neg.size else np.ones(1),
                v_bar=self.layout.v_bar_neg,
                source_scale=3.0 * params.q_th_neg / (params.q_e * params.ell_neg),
            ),
        }

    # -- geometry ------------------------------------------------------------

    def _build_electrolyte(self) -> None:
        g = self.params
        mesh = self.mesh
        widths = np.concatenate([
            np.full(mesh.n_x_neg, g.ell_neg / mesh.n_x_neg),
            np.full(mesh.n_sep, g.ell_sep / mesh.n_sep),
            np.full(mesh.n_x_pos, g.ell_pos / mesh.n_x_pos),
        ])
        tau = np.concatenate([
            np.full(mesh.n_x_neg, g.tau_e_neg),
            np.full(mesh.n_sep, g.tau_e_sep),
            np.full(mesh.n_x_pos, g.tau_e_pos),
        ])
        self.cell_width = widths
        self.porosity_ratio = np.concatenate([
            np.full(mesh.n_x_neg, g.zeta_neg),
            np.ones(mesh.n_sep),
            np.full(mesh.n_x_pos, g.zeta_pos),
        ])
        faces = np.concatenate([[0.0], np.cumsum(widths)])
        faces[-1] = 1.0
        # interior face transmissibility, zero at both outer boundaries
        trans = np.zeros(mesh.n_x + 1)
        trans[1:-1] = 2.0 / (widths[:-1] * tau[:-1] + widths[1:] * tau[1:])
        self._face_trans = trans
        phi = np.where(
            faces <= g.ell_neg,
            faces / g.ell_neg,
            np.where(faces >= 1.0 - g.ell_pos, (1.0 - faces) / g.ell_pos, 1.0),
        )
        phi[0] = 0.0
        phi[-1] = 0.0
        # d(-dN_mig/dx)/di per cell
        self._migration = g.t_plus / g.q_e * (phi[1:] - phi[:-1]) / widths

    def mass_diagonal(self) -> np.ndarray:
        n = self.layout.size
        diag = np.zeros(n)
        diag[: 2 * self.mesh.n_r] = 1.0
        diag[self.layout.ce] = self.porosity_ratio if self.mode == ModelMode.SPME else 0.0
        diag[self.layout.v_bar_neg] = self.params.c_dl_neg
        diag[self.layout.v_bar_pos] = self.params.c_dl_pos
        return diag

    def input_vector(self) -> np.ndarray:
        b = np.zeros(self.layout.size)
        b[-1] = 1.0
        return b

    # -- pointwise physics ---------------------------------------------------

    def surface_stoichiometry(self, x: np.ndarray, electrode: str) -> float:
        c = x[self.electrodes[electrode].particle]
        return 1.5 * c[-1] - 0.5 * c[-2]

    def _kinetics(self, x: np.ndarray, el: _Electrode) -> _Kinetics:
        c = x[el.particle]
        c_s = 1.5 * c[-1] - 0.5 * c[-2]
        if not SURFACE_GUARD < c_s < 1.0 - SURFACE_GUARD:
            raise StoichiometryGuardError(f"surface stoichiometry ({el.tag})", el.particle.stop - 1, float(c_s))
        v_bar = x[el.v_bar]
        u = el.curve.value(c_s)
        if el.ce_cells.size:
            ce = x[self.layout.ce][el.ce_cells]
            if np.any(ce <= 0.0):
                bad = int(np.argmin(ce))
                raise StoichiometryGuardError(
                    "electrolyte concentration", self.layout.ce.start + int(el.ce_cells[bad]), float(ce[bad])
                )
            log_ce = np.log(ce)
            eta = v_bar + self.k_t * (el.weights @ log_ce - log_ce) - u
        else:
            ce = np.ones(1)
            log_ce = np.zeros(1)
            eta = np.array([v_bar - u])
        i0 = np.sqrt(c_s * (1.0 - c_s) * ce) / el.tau_ct
        arg = eta / self.kappa
        sinh = np.sinh(arg)
        j = 2.0 * i0 * sinh
        return _Kinetics(
            c_surf=c_s, i0=i0, eta=eta, sinh=sinh, cosh=np.cosh(arg), j=j,
            j_bar=float(el.weights @ j), log_ce=log_ce,
        )

    def _eta_e(self, kin_pos: _Kinetics, kin_neg: _Kinetics) -> float:
        if self.mode == ModelMode.SPM:
            return 0.0
        pos, neg = self.electrodes["pos"], self.electrodes["neg"]
        return self.k_t * (pos.weights @ kin_pos.log_ce - neg.weights @ kin_neg.log_ce)

    def _electrolyte_flux(self, x: np.ndarray) -> np.ndarray:
        if self.mode == ModelMode.SPM:
            return np.zeros(0)
        ce = x[self.layout.ce]
        current = x[self.layout.current]
        flux = np.zeros(self.mesh.n_x + 1)
        flux[1:-1] = -self._face_trans[1:-1] * np.diff(ce)
        phi_flux = np.cumsum(np.concatenate([[0.0], self._migration * self.cell_width]))
        return flux - current * phi_flux

    # -- residual ------------------------------------------------------------

    def residual(self, x: np.ndarray) -> np.ndarray:
        lay = self.layout
        g = self.params
        res = np.empty(lay.size)
        kin = {tag: self._kinetics(x, el) for tag, el in self.electrodes.items()}

        for tag, el in self.electrodes.items():
            c = x[el.particle]
            face = np.zeros(self.mesh.n_r + 1)
            face[1:-1] = self._radial_face[tag] * np.diff(c)
            face[-1] = -kin[tag].j_bar
            res[el.particle] = np.diff(face) / self.shell_volume

        current = x[lay.current]
        if self.mode == ModelMode.SPME:
            ce = x[lay.ce]
            trans = self._face_trans
            diffusive = np.zeros(self.mesh.n_x + 1)
            diffusive[1:-1] = trans[1:-1] * np.diff(ce)
            block = np.diff(diffusive) / self.cell_width + current * self._migration
            for el in self.electrodes.values():
                block[el.ce_cells] += el.source_scale * kin[el.tag].j
            res[lay.ce] = block

        for tag, el in self.electrodes.items():
            res[el.v_bar] = el.sign * current - 3.0 * el.q_th * kin[tag].j_bar

        eta_e = self._eta_e(kin["pos"], kin["neg"])
        res[lay.voltage] = x[lay.v_bar_pos] - x[lay.v_bar_neg] + eta_e + g.r0 * current - x[lay.voltage]
        res[lay.current] = -current
        return res

    # -- Jacobian ------------------------------------------------------------

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        lay = self.layout
        n_r = self.mesh.n_r
        rows: list[np.ndarray] = []
        cols: list[np.ndarray] = []
        vals: list[np.ndarray] = []

        def add(r, c, v) -> None:
            r, c, v = np.broadcast_arrays(np.asarray(r), np.asarray(c), np.asarray(v, dtype=float))
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())

        # radial diffusion, tridiagonal
        idx = np.arange(n_r)
        for tag, el in self.electrodes.items():
            a = np.concatenate([[0.0], self._radial_face[tag], [0.0]])
            base = el.particle.start
            add(base + idx, base + idx, -(a[1:] + a[:-1]) / self.shell_volume)
            add(base + idx[:-1], base + idx[1:], a[1:-1] / self.shell_volume[:-1])
            add(base + idx[1:], base + idx[:-1], a[1:-1] / self.shell_volume[1:])

        if self.mode == ModelMode.SPME:
            n_x = self.mesh.n_x
            ex = np.arange(n_x)
            t = self._face_trans
            ce0 = lay.ce.start
            add(ce0 + ex, ce0 + ex, -(t[1:] + t[:-1]) / self.cell_width)
            add(ce0 + ex[:-1], ce0 + ex[1:], t[1:-1] / self.cell_width[:-1])
            add(ce0 + ex[1:], ce0 + ex[:-1], t[1:-1] / self.cell_width[1:])
            add(ce0 + ex, lay.current, self._migration)

        ratio = self.k_t / self.kappa
        for tag, el in self.electrodes.items():
            kin = self._kinetics(x, el)
            c_s = kin.c_surf
            u_prime = el.curve.slope(c_s)
            di0_dcs = kin.i0 * (1.0 - 2.0 * c_s) / (2.0 * c_s * (1.0 - c_s))
            dj_dcs = 2.0 * di0_dcs * kin.sinh - 2.0 * kin.i0 * kin.cosh * u_prime / self.kappa
            dj_dvb = 2.0 * kin.i0 * kin.cosh / self.kappa
            w = el.weights
            djbar_dcs = w @ dj_dcs
            djbar_dvb = w @ dj_dvb
            surf = el.particle.stop - 1
            surf_cols = np.array([surf, surf - 1])
            cs_weights = np.array([1.5, -0.5])
            v_last = self.shell_volume[-1]

            # particle surface row: -jbar / V_last
            add(surf, surf_cols, -djbar_dcs * cs_weights / v_last)
            add(surf, el.v_bar, -djbar_dvb / v_last)
            # double-layer row: sign * i - 3 Q_th jbar
            add(el.v_bar, surf_cols, -3.0 * el.q_th * djbar_dcs * cs_weights)
            add(el.v_bar, el.v_bar, -3.0 * el.q_th * djbar_dvb)
            add(el.v_bar, lay.current, el.sign)

            if el.ce_cells.size:
                ce = np.exp(kin.log_ce)
                g_k = 2.0 * kin.i0 * kin.cosh * ratio
                diag_k = kin.i0 * kin.sinh / ce - g_k / ce
                h_m = w / ce
                # dj_k/dce_m = diag_k delta_km + g_k h_m
                dj_dce = np.outer(g_k, h_m)
                dj_dce[np.diag_indices_from(dj_dce)] += diag_k
                djbar_dce = w @ dj_dce
                ce_cols = lay.ce.start + el.ce_cells
                add(surf, ce_cols, -djbar_dce / v_last)
                add(el.v_bar, ce_cols, -3.0 * el.q_th * djbar_dce)
                # electrolyte source rows
                src_rows = ce_cols
                add(src_rows[:, None], surf_cols[None, :], el.source_scale * np.outer(dj_dcs, cs_weights))
                add(src_rows, el.v_bar, el.source_scale * dj_dvb)
                add(src_rows[:, None], ce_cols[None, :], el.source_scale * dj_dce)
                # eta_e in the voltage row
                add(lay.voltage, ce_cols, el.sign * self.k_t * h_m)

        add(lay.voltage, [lay.v_bar_pos, lay.v_bar_neg, lay.voltage, lay.current], [1.0, -1.0, -1.0, self.params.r0])
        add(lay.current, lay.current, -1.0)

        jac = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(lay.size, lay.size),
        )
        jac.sum_duplicates()
        jac.sort_indices()
        return jac

    # -- states --------------------------------------------------------------

    def equilibrium(self, soc: float) -> np.ndarray:
        lay = self.layout
        c_pos, c_neg = stoichiometry_at_soc(soc, self.params)
        x = np.zeros(lay.size)
        x[lay.c_pos] = c_pos
        x[lay.c_neg] = c_neg
        x[lay.ce] = 1.0
        for tag, el in self.electrodes.items():
            x[el.v_bar] = el.curve.value(self.surface_stoichiometry(x, tag))
        x[lay.voltage] = x[lay.v_bar_pos] - x[lay.v_bar_neg]
        x[lay.current] = 0.0
        return x

    def auxiliary(self, x: np.ndarray) -> Auxiliary:
        kin_pos = self._kinetics(x, self.electrodes["pos"])
        kin_neg = self._kinetics(x, self.electrodes["neg"])
        return Auxiliary(
            j_pos=kin_pos.j, j_neg=kin_neg.j,
            i0_pos=kin_pos.i0, i0_neg=kin_neg.i0,
            eta_pos=kin_pos.eta, eta_neg=kin_neg.eta,
            j_bar_pos=kin_pos.j_bar, j_bar_neg=kin_neg.j_bar,
            c_surf_pos=kin_pos.c_surf, c_surf_neg=kin_neg.c_surf,
            electrolyte_flux=self._electrolyte_flux(x),
            eta_e=self._eta_e(kin_pos, kin_neg),
        )

    def particle_average(self, x: np.ndarray, electrode: str) -> float:
        return 3.0 * float(self.shell_volume @ x[self.electrodes[electrode].particle])

    def coulomb_content(self, x: np.ndarray) -> tuple[float, float]:
        """(Q_th+ cbar+ + Q_th- cbar-, integral of zeta c_e over x)."""
        lithium = (
            self.params.q_th_pos * self.particle_average(x, "pos")
            + self.params.q_th_neg * self.particle_average(x, "neg")
        )
        if self.mode == ModelMode.SPM:
            return lithium, float(self.porosity_ratio @ self.cell_width)
        return lithium, float((self.porosity_ratio * self.cell_width) @ x[self.layout.ce])


def assemble_dae(
    params: GroupedParameters,
    curves: tuple[OcpCurve, OcpCurve],
    mesh: Mesh | None = None,
    mode: ModelMode | str = ModelMode.SPME,
) -> DaeSystem:
    """Discretize the grouped model; ``curves`` is (positive, negative)."""
    mesh = mesh or Mesh()
    model = SpmeModel(params, curves, mesh, ModelMode(mode))
    mass = sp.diags(model.mass_diagonal()).tocsr()
    logger.debug("Assembled %s system with %d states", model.mode, model.layout.size)
    return DaeSystem(
        model=model,
        mass_matrix=mass,
        input_vector=model.input_vector(),
        layout=model.layout,
        mode=model.mode,
    )


def equilibrium_state(dae: DaeSystem, soc: float) -> StateVector | np.ndarray:
    """Rest state at ``soc``: uniform particles, c_e = 1, i = 0, v = OCV."""
    x = dae.model.equilibrium(soc)
    if dae.layout is None:
        return x
    return StateVector(x, dae.layout)


def auxiliary(dae: DaeSystem, x) -> Auxiliary:
    return dae.model.auxiliary(np.asarray(x, dtype=float))


def coulomb_content(dae: DaeSystem, x) -> tuple[float, float]:
    return dae.model.coulomb_content(np.asarray(x, dtype=float))
