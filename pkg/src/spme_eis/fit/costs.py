"""Least-squares costs and fit metrics."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from spme_eis.errors import GridMismatchError, SpmeError
from spme_eis.fit.problem import FitProblem, VoltageTarget
from spme_eis.impedance import ImpedanceDataset, spectrum_at_soc
from spme_eis.model.dae import DaeSystem, assemble_dae, equilibrium_state
from spme_eis.simulate.integrator import integrate

logger = logging.getLogger(__name__)

FAILURE_COST = 1e12


def model_dataset(dae: DaeSystem, data: ImpedanceDataset) -> ImpedanceDataset:
    """Model spectra on the SOCs and frequency grids of ``data``."""
    return ImpedanceDataset([spectrum_at_soc(dae, s.grid, s.soc) for s in data])


def impedance_cost(theta: Sequence[float], problem: FitProblem) -> float:
    """Sum over SOCs and frequencies of |Z_data - Z_model|^2 [Ohm^2]."""
    data = problem.target
    params = problem.to_parameters(theta)
    dae = assemble_dae(params, problem.curves, problem.mesh, problem.mode)
    total = 0.0
    for s in data:
        model = spectrum_at_soc(dae, s.grid, s.soc)
        total += float(np.sum(np.abs(s.z - model.z) ** 2))
    return total


def simulate_voltage(params, problem: FitProblem) -> np.ndarray:
    target: VoltageTarget = problem.target
    dae = assemble_dae(params, problem.curves, problem.mesh, problem.mode)
    x0 = np.asarray(equilibrium_state(dae, target.soc0), dtype=float)
    traj = integrate(dae, x0, target.profile, target.times, problem.tol, store_states=False, reinitialize=True)
    return traj.voltage


def voltage_cost(theta: Sequence[float], problem: FitProblem) -> float:
    """Sum over samples of (v_data - v_model)^2 [V^2]."""
    v_model = simulate_voltage(problem.to_parameters(theta), problem)
    return float(np.sum((problem.target.voltage - v_model) ** 2))


class _Cost:
    """Callable cost that turns model failures into ``FAILURE_COST``.

    Counters are per instance; copies sent to worker processes count on
    their own.
    """

    def __init__(self, problem: FitProblem) -> None:
        self.problem = problem
        self.n_evaluations = 0
        self.n_failures = 0

    def evaluate(self, theta: Sequence[float]) -> float:
        raise NotImplementedError

    def __call__(self, theta: Sequence[float]) -> float:
        self.n_evaluations += 1
        try:
            value = self.evaluate(theta)
        except (SpmeError, FloatingPointError, ArithmeticError) as exc:
            self.n_failures += 1
            logger.debug("Model failure at theta=%s: %s", np.asarray(theta).tolist(), exc)
            return FAILURE_COST
        if not np.isfinite(value):
            self.n_failures += 1
            return FAILURE_COST
        return value


class ImpedanceCost(_Cost):
    def evaluate(self, theta: Sequence[float]) -> float:
        return impedance_cost(theta, self.problem)


class VoltageCost(_Cost):
    def evaluate(self, theta: Sequence[float]) -> float:
        return voltage_cost(theta, self.problem)


def cost_for(problem: FitProblem) -> _Cost:
    return ImpedanceCost(problem) if problem.kind == "impedance" else VoltageCost(problem)


def fitting_error(data: ImpedanceDataset, model: ImpedanceDataset) -> dict[float, float]:
    """Mean relative error per SOC [%]: 100/K * sum |Z_data - Z_model| / |Z_data|."""
    if data.socs != model.socs:
        raise GridMismatchError(f"SOC sets differ: {data.socs} vs {model.socs}")
    errors = {}
    for d, m in zip(data, model):
        if d.f_hz.shape != m.f_hz.shape or not np.array_equal(d.f_hz, m.f_hz):
            raise GridMismatchError(f"frequency grids differ at soc={d.soc}")
        errors[d.soc] = float(100.0 * np.mean(np.abs(d.z - m.z) / np.abs(d.z)))
    return errors
