from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np

from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import ParameterDomainError
from spme_eis.fit.costs import cost_for, fitting_error, model_dataset
from spme_eis.fit.problem import FitProblem
from spme_eis.fit.pso import PSOConfig, pso_minimize
from spme_eis.formats.files import atomic_write_text
from spme_eis.model.dae import assemble_dae
from spme_eis.model.parameters import GroupedParameters

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RunResult:
    seed: int
    theta: np.ndarray
    cost: float
    iterations: int
    trace: np.ndarray
    n_evaluations: int
    n_failures: int


@dataclass(frozen=True, eq=False)
class FitResult:
    names: tuple[str, ...]
    theta: np.ndarray
    cost: float
    params: GroupedParameters
    runs: list[RunResult]
    rel_std: dict[str, float]
    fitting_errors: dict[float, float] | None
    rmse: float | None
    wall_time: float

    @property
    def best_run(self) -> RunResult:
        return min(self.runs, key=lambda r: r.cost)

    def to_dict(self) -> dict:
        return {
            "cost": self.cost,
            "theta": dict(zip(self.names, self.theta.tolist())),
            "rel_std_percent": self.rel_std,
            "fitting_error_percent": (
                {repr(soc): fe for soc, fe in self.fitting_errors.items()} if self.fitting_errors else None
            ),
            "rmse_v": self.rmse,
            "wall_time_s": self.wall_time,
            "parameters": self.params.as_dict(),
            "runs": [
                {
                    "seed": r.seed,
                    "cost": r.cost,
                    "iterations": r.iterations,
                    "theta": r.theta.tolist(),
                    "evaluations": r.n_evaluations,
                    "failures": r.n_failures,
                    "trace": r.trace.tolist(),
                }
                for r in self.runs
            ],
        }

    def save(self, path: Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n")
        logger.info("Wrote fit result to %s", path)


def _run(problem: FitProblem, config: PSOConfig, seed: int) -> RunResult:
    cost = cost_for(problem)
    res = pso_minimize(cost, problem.bound_pairs(), seed=seed, config=config)
    if cost.n_failures:
        logger.warning("Run with seed %d: %d of %d evaluations failed", seed, cost.n_failures, cost.n_evaluations)
    return RunResult(
        seed=seed,
        theta=res.theta,
        cost=res.cost,
        iterations=res.iterations,
        trace=res.trace,
        n_evaluations=cost.n_evaluations,
        n_failures=cost.n_failures,
    )


def relative_std(thetas: np.ndarray, best: np.ndarray) -> np.ndarray:
    """Sample standard deviation over runs relative to the best estimate [%]."""
    std = thetas.std(axis=0, ddof=1)
    out = np.full(std.shape, math.inf)
    nonzero = best != 0.0
    out[nonzero] = 100.0 * std[nonzero] / np.abs(best[nonzero])
    out[std == 0.0] = 0.0
    return out


def multistart(
    problem: FitProblem,
    n_runs: int = 10,
    seeds: Sequence[int] | None = None,
    *,
    swarm_size: int = 50,
    max_iter: int = 1000,
    seed: int = 0,
    dispatcher: JobDispatcher | None = None,
) -> FitResult:
    """Independent PSO runs; the best one gives the estimate, the spread its dispersion."""
    seeds = list(seeds) if seeds is not None else [seed + k for k in range(n_runs)]
    if len(seeds) < 2:
        raise ParameterDomainError("n_runs", len(seeds), "need at least two runs")
    config = PSOConfig(swarm_size=swarm_size, max_iter=max_iter)
    logger.info("--- [MULTISTART] %d run(s), %d free parameters ---", len(seeds), len(problem.free))

    start = time.perf_counter()
    job = partial(_run, problem, config)
    runs = dispatcher.map(job, seeds) if dispatcher is not None else [job(s) for s in seeds]
    best = min(runs, key=lambda r: r.cost)
    rel = relative_std(np.array([r.theta for r in runs]), best.theta)
    params = problem.to_parameters(best.theta)

    fe = None
    rmse = None
    if problem.kind == "impedance":
        dae = assemble_dae(params, problem.curves, problem.mesh, problem.mode)
        fe = fitting_error(problem.target, model_dataset(dae, problem.target))
    else:
        rmse = math.sqrt(best.cost / problem.target.times.size)

    wall = time.perf_counter() - start
    logger.info("--- [MULTISTART] Best cost %.6g after %.1f s ---", best.cost, wall)
    return FitResult(
        names=problem.free,
        theta=best.theta,
        cost=best.cost,
        params=params,
        runs=runs,
        rel_std=dict(zip(problem.free, rel.tolist())),
        fitting_errors=fe,
        rmse=rmse,
        wall_time=wall,
    )
