from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from spme_eis.errors import ParameterDomainError, UnknownParameterError

FARADAY = 96485.33212  # C/mol
GAS_CONSTANT = 8.314462618  # J/(mol K)


@dataclass(frozen=True)
class PhysicalConstants:
    F: float = FARADAY
    R_g: float = GAS_CONSTANT
    T: float = 298.15

    def __post_init__(self) -> None:
        for name in ("F", "R_g", "T"):
            _require_positive(name, getattr(self, name))

    @property
    def thermal_voltage(self) -> float:
        """2 R_g T / F, the voltage scale of the symmetric Butler-Volmer law."""
        return 2.0 * self.R_g * self.T / self.F


@dataclass(frozen=True)
class DimensionalParameters:
    """Physical cell parameters in SI units (suffix _pos/_neg per electrode)."""

    alpha_pos: float
    alpha_neg: float
    eps_pos: float
    eps_neg: float
    eps_sep: float
    c_max_pos: float
    c_max_neg: float
    L_pos: float
    L_neg: float
    L_sep: float
    area: float
    R_pos: float
    R_neg: float
    D_pos: float
    D_neg: float
    D_e: float
    C_dl_pos: float
    C_dl_neg: float
    m_pos: float
    m_neg: float
    t_plus: float
    c_pos_0: float
    c_pos_100: float
    c_neg_0: float
    c_neg_100: float
    c_e0: float
    R_0: float
    b: float = 1.5
    b_pos: float | None = None
    b_neg: float | None = None
    b_sep: float | None = None

    def __post_init__(self) -> None:
        for name in (
            "alpha_pos", "alpha_neg", "c_max_pos", "c_max_neg", "L_pos", "L_neg", "L_sep",
            "area", "R_pos", "R_neg", "D_pos", "D_neg", "D_e", "m_pos", "m_neg",
            "c_pos_0", "c_pos_100", "c_neg_0", "c_neg_100", "c_e0", "b",
        ):
            _require_positive(name, getattr(self, name))
        for name in ("C_dl_pos", "C_dl_neg", "R_0"):
            _require_nonnegative(name, getattr(self, name))
        for name in ("eps_pos", "eps_neg", "eps_sep", "t_plus"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ParameterDomainError(name, value, "must lie in (0, 1)")

    @property
    def L(self) -> float:
        return self.L_neg + self.L_sep + self.L_pos

    def bruggeman(self, region: str) -> float:
        value = getattr(self, f"b_{region}")
        return self.b if value is None else value


@dataclass(frozen=True)
class GroupedParameters:
    """The grouped parameter set driving the model.

    Times in s, capacities in A s, capacitances in F, resistance in Ohm and
    stoichiometries dimensionless. ``q_th_pos``/``q_th_neg`` are stored so
    that a dimensional grouping keeps its exact values; use
    :meth:`with_theoretical_capacities` to re-derive them from ``q_meas``.
    """

    q_th_pos: float
    q_th_neg: float
    q_e: float
    tau_d_pos: float
    tau_d_neg: float
    tau_e_pos: float
    tau_e_neg: float
    tau_e_sep: float
    tau_ct_pos: float
    tau_ct_neg: float
    c_dl_pos: float
    c_dl_neg: float
    zeta_pos: float
    zeta_neg: float
    ell_pos: float
    ell_neg: float
    sto_pos_0: float
    sto_pos_100: float
    sto_neg_0: float
    sto_neg_100: float
    t_plus: float
    r0: float
    q_meas: float
    temperature: float = 298.15

    def __post_init__(self) -> None:
        for name in (
            "q_th_pos", "q_th_neg", "q_e", "tau_d_pos", "tau_d_neg", "tau_e_pos",
            "tau_e_neg", "tau_e_sep", "tau_ct_pos", "tau_ct_neg", "zeta_pos",
            "zeta_neg", "ell_pos", "ell_neg", "q_meas", "temperature",
        ):
            _require_positive(name, getattr(self, name))
        # C = 0 switches the double layer off (algebraic row)
        for name in ("c_dl_pos", "c_dl_neg", "r0"):
            _require_nonnegative(name, getattr(self, name))
        for name in ("sto_pos_0", "sto_pos_100", "sto_neg_0", "sto_neg_100"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ParameterDomainError(name, value, "stoichiometry must lie in [0, 1]")
        if not self.sto_pos_100 < self.sto_pos_0:
            raise ParameterDomainError(
                "sto_pos_100", self.sto_pos_100, "positive electrode must empty on charge (sto_pos_100 < sto_pos_0)"
            )
        if not self.sto_neg_0 < self.sto_neg_100:
            raise ParameterDomainError(
                "sto_neg_100", self.sto_neg_100, "negative electrode must fill on charge (sto_neg_0 < sto_neg_100)"
            )
        if not self.ell_pos + self.ell_neg < 1.0:
            raise ParameterDomainError("ell_pos", self.ell_pos, "ell_pos + ell_neg must be < 1")
        if not 0.0 < self.t_plus < 1.0:
            raise ParameterDomainError("t_plus", self.t_plus, "must lie in (0, 1)")

    @property
    def ell_sep(self) -> float:
        return 1.0 - self.ell_pos - self.ell_neg

    def constants(self) -> PhysicalConstants:
        return PhysicalConstants(T=self.temperature)

    def with_theoretical_capacities(self) -> GroupedParameters:
        q_pos, q_neg = theoretical_capacities(
            self.q_meas, self.sto_pos_0, self.sto_pos_100, self.sto_neg_0, self.sto_neg_100
        )
        return replace(self, q_th_pos=q_pos, q_th_neg=q_neg)

    def updated(self, **values: float) -> GroupedParameters:
        """Copy with new values; Q_th is re-derived from Q_meas and the windows."""
        known = grouped_field_names()
        for name in values:
            if name not in known:
                raise UnknownParameterError(name, known)
        return replace(self, **values).with_theoretical_capacities()

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# Free parameters of the impedance fit, in export order.
FIT_PARAMETER_NAMES = (
    "tau_d_pos", "tau_d_neg", "tau_e_pos", "tau_e_neg", "tau_e_sep", "zeta_pos", "zeta_neg", "q_e",
    "tau_ct_pos", "tau_ct_neg", "c_dl_pos", "c_dl_neg", "sto_pos_0", "sto_neg_0", "sto_pos_100",
    "sto_neg_100", "t_plus", "r0",
)
STOICHIOMETRY_NAMES = ("sto_pos_0", "sto_neg_0", "sto_pos_100", "sto_neg_100")


def grouped_field_names() -> list[str]:
    return [f.name for f in fields(GroupedParameters)]


def group_parameters(
    dim: DimensionalParameters, constants: PhysicalConstants | None = None
) -> GroupedParameters:
    """Apply the grouping formulas to a dimensional parameter set.

    The measured capacity is taken from the negative electrode window,
    ``Q_meas = Q_th,- (c_-^100% - c_-^0%)``.
    """
    constants = constants or PhysicalConstants()
    F = constants.F
    L = dim.L
    sto_pos_0 = dim.c_pos_0 / dim.c_max_pos
    sto_pos_100 = dim.c_pos_100 / dim.c_max_pos
    sto_neg_0 = dim.c_neg_0 / dim.c_max_neg
    sto_neg_100 = dim.c_neg_100 / dim.c_max_neg

    q_th_pos = F * dim.alpha_pos * dim.c_max_pos * dim.L_pos * dim.area
    q_th_neg = F * dim.alpha_neg * dim.c_max_neg * dim.L_neg * dim.area
    b_pos = dim.bruggeman("pos")
    b_neg = dim.bruggeman("neg")
    b_sep = dim.bruggeman("sep")

    return GroupedParameters(
        q_th_pos=q_th_pos,
        q_th_neg=q_th_neg,
        q_e=F * dim.eps_sep * dim.c_e0 * L * dim.area,
        tau_d_pos=dim.R_pos**2 / dim.D_pos,
        tau_d_neg=dim.R_neg**2 / dim.D_neg,
        tau_e_pos=dim.eps_sep * L**2 / (dim.eps_pos**b_pos * dim.D_e),
        tau_e_neg=dim.eps_sep * L**2 / (dim.eps_neg**b_neg * dim.D_e),
        tau_e_sep=L**2 / (dim.eps_sep ** (b_sep - 1.0) * dim.D_e),
        tau_ct_pos=F * dim.R_pos / (dim.m_pos * math.sqrt(dim.c_e0)),
        tau_ct_neg=F * dim.R_neg / (dim.m_neg * math.sqrt(dim.c_e0)),
        c_dl_pos=3.0 * dim.alpha_pos * dim.C_dl_pos * dim.L_pos * dim.area / dim.R_pos,
        c_dl_neg=3.0 * dim.alpha_neg * dim.C_dl_neg * dim.L_neg * dim.area / dim.R_neg,
        zeta_pos=dim.eps_pos / dim.eps_sep,
        zeta_neg=dim.eps_neg / dim.eps_sep,
        ell_pos=dim.L_pos / L,
        ell_neg=dim.L_neg / L,
        sto_pos_0=sto_pos_0,
        sto_pos_100=sto_pos_100,
        sto_neg_0=sto_neg_0,
        sto_neg_100=sto_neg_100,
        t_plus=dim.t_plus,
        r0=dim.R_0,
        q_meas=q_th_neg * (sto_neg_100 - sto_neg_0),
        temperature=constants.T,
    )


def theoretical_capacities(
    q_meas: float, sto_pos_0: float, sto_pos_100: float, sto_neg_0: float, sto_neg_100: float
) -> tuple[float, float]:
    """Electrode capacities from the measured capacity and stoichiometry windows."""
    window_pos = sto_pos_100 - sto_pos_0
    window_neg = sto_neg_100 - sto_neg_0
    if window_pos == 0.0:
        raise ParameterDomainError("sto_pos_100", sto_pos_100, "zero-width stoichiometry window")
    if window_neg == 0.0:
        raise ParameterDomainError("sto_neg_100", sto_neg_100, "zero-width stoichiometry window")
    q_pos = -q_meas / window_pos
    q_neg = q_meas / window_neg
    if q_pos <= 0.0:
        raise ParameterDomainError("sto_pos_100", sto_pos_100, "window gives a non-positive capacity")
    if q_neg <= 0.0:
        raise ParameterDomainError("sto_neg_100", sto_neg_100, "window gives a non-positive capacity")
    return q_pos, q_neg


def typical_ct_resistance(
    g: GroupedParameters, constants: PhysicalConstants | None = None
) -> tuple[float, float]:
    """(R_ct+, R_ct-) typical charge-transfer resistances in Ohm."""
    constants = constants or g.constants()
    scale = constants.thermal_voltage / 3.0
    return scale * g.tau_ct_pos / g.q_th_pos, scale * g.tau_ct_neg / g.q_th_neg


def stoichiometry_at_soc(soc: float, g: GroupedParameters) -> tuple[float, float]:
    if not 0.0 <= soc <= 100.0:
        raise ParameterDomainError("soc", soc, "state of charge must lie in [0, 100] %")
    frac = soc / 100.0
    c_pos = g.sto_pos_0 + frac * (g.sto_pos_100 - g.sto_pos_0)
    c_neg = g.sto_neg_0 + frac * (g.sto_neg_100 - g.sto_neg_0)
    return c_pos, c_neg


def charge_transfer_resistance(
    g: GroupedParameters, soc: float, ce_mean_sqrt: float = 1.0
) -> tuple[float, float]:
    """SOC-dependent charge-transfer resistances (R_ct+, R_ct-) at rest."""
    r_pos, r_neg = typical_ct_resistance(g)
    c_pos, c_neg = stoichiometry_at_soc(soc, g)
    return (
        r_pos / (2.0 * math.sqrt(c_pos * (1.0 - c_pos)) * ce_mean_sqrt),
        r_neg / (2.0 * math.sqrt(c_neg * (1.0 - c_neg)) * ce_mean_sqrt),
    )


@dataclass(frozen=True)
class Timescales:
    tau_ct_dl_pos: float
    tau_ct_dl_neg: float
    tau_e_pos: float
    tau_e_neg: float
    tau_e_sep: float
    tau_d_pos: float
    tau_d_neg: float

    def corner_frequencies(self) -> dict[str, float]:
        """1 / (2 pi tau) for every timescale, in Hz."""
        return {f.name: 1.0 / (2.0 * math.pi * getattr(self, f.name)) for f in fields(self) if getattr(self, f.name) > 0}


def timescales(g: GroupedParameters, constants: PhysicalConstants | None = None) -> Timescales:
    r_pos, r_neg = typical_ct_resistance(g, constants)
    return Timescales(
        tau_ct_dl_pos=r_pos * g.c_dl_pos,
        tau_ct_dl_neg=r_neg * g.c_dl_neg,
        tau_e_pos=g.tau_e_pos,
        tau_e_neg=g.tau_e_neg,
        tau_e_sep=g.tau_e_sep,
        tau_d_pos=g.tau_d_pos,
        tau_d_neg=g.tau_d_neg,
    )


# ---------------------------------------------------------------------------
# Reference sets (LG M50)
# ---------------------------------------------------------------------------


def chen2020_dimensional() -> DimensionalParameters:
    c_max_pos = 63104.0
    c_max_neg = 33133.0
    return DimensionalParameters(
        alpha_pos=0.665,
        alpha_neg=0.75,
        eps_pos=0.335,
        eps_neg=0.25,
        eps_sep=0.47,
        c_max_pos=c_max_pos,
        c_max_neg=c_max_neg,
        L_pos=75.6e-6,
        L_neg=85.2e-6,
        L_sep=12e-6,
        area=0.1027,
        R_pos=5.22e-6,
        R_neg=5.86e-6,
        D_pos=4e-15,
        D_neg=3.3e-14,
        D_e=1.769e-10,
        C_dl_pos=0.2,
        C_dl_neg=0.2,
        m_pos=3.42e-6,
        m_neg=6.48e-7,
        t_plus=0.2594,
        c_pos_0=0.8540 * c_max_pos,
        c_pos_100=0.2638 * c_max_pos,
        c_neg_0=0.02635 * c_max_neg,
        c_neg_100=0.9106 * c_max_neg,
        c_e0=1000.0,
        R_0=0.01,
        b=1.5,
    )


def reference_grouped() -> GroupedParameters:
    """Grouped LG M50 set; Q_th from the measured capacity and windows."""
    return GroupedParameters(
        q_th_pos=1.0,
        q_th_neg=1.0,
        q_e=804.8,
        tau_d_pos=6812.0,
        tau_d_neg=1041.0,
        tau_e_pos=409.2,
        tau_e_neg=634.7,
        tau_e_sep=246.2,
        tau_ct_pos=4657.0,
        tau_ct_neg=27592.0,
        c_dl_pos=0.5935,
        c_dl_neg=0.6719,
        zeta_pos=0.7128,
        zeta_neg=0.5319,
        ell_pos=0.4375,
        ell_neg=0.4930,
        sto_pos_0=0.8540,
        sto_pos_100=0.2638,
        sto_neg_0=0.02635,
        sto_neg_100=0.9106,
        t_plus=0.2594,
        r0=0.01,
        q_meas=18551.0,
        temperature=298.15,
    ).with_theoretical_capacities()


def _require_positive(name: str, value: float) -> None:
    if not (value > 0.0 and math.isfinite(value)):
        raise ParameterDomainError(name, value, "must be a finite positive number")


def _require_nonnegative(name: str, value: float) -> None:
    if not (value >= 0.0 and math.isfinite(value)):
        raise ParameterDomainError(name, value, "must be a finite non-negative number")
