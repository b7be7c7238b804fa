"""Global-best particle swarm with reflective bounds.

Particles move in the unit box; positions are mapped onto [lb, ub] only
for evaluation, so the cost never sees an out-of-bounds point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from spme_eis.errors import ParameterDomainError

logger = logging.getLogger(__name__)

MapFn = Callable[[Callable[[Any], float], Sequence[Any]], Sequence[float]]


@dataclass(frozen=True)
class PSOConfig:
    swarm_size: int = 50
    max_iter: int = 1000
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    v_max: float = 0.5
    v_init: float = 0.1
    # stop once the best cost improved by at most stall_tol (relative) over stall_iter iterations
    stall_iter: int | None = None
    stall_tol: float = 0.0


@dataclass(frozen=True, eq=False)
class PSOResult:
    theta: np.ndarray
    cost: float
    trace: np.ndarray
    iterations: int
    evaluations: int


def _reflect(x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    outside = (x < 0.0) | (x > 1.0)
    y = np.mod(x, 2.0)
    y = np.where(y > 1.0, 2.0 - y, y)
    return y, np.where(outside, -v, v)


def pso_minimize(
    cost: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    swarm_size: int = 50,
    max_iter: int = 1000,
    seed: int | None = None,
    *,
    config: PSOConfig | None = None,
    map_fn: MapFn | None = None,
) -> PSOResult:
    """Minimize ``cost`` over the box ``bounds``.

    The same seed gives the same result. ``map_fn(fn, points)`` may
    evaluate a whole swarm at once (for example ``JobDispatcher.map``).
    """
    cfg = config or PSOConfig(swarm_size=swarm_size, max_iter=max_iter)
    if cfg.swarm_size < 10:
        raise ParameterDomainError("swarm_size", cfg.swarm_size, "need at least 10 particles")
    if cfg.stall_iter is not None and cfg.stall_iter < 1:
        raise ParameterDomainError("stall_iter", cfg.stall_iter, "must be >= 1")
    if cfg.max_iter < 0:
        raise ParameterDomainError("max_iter", cfg.max_iter, "must be >= 0")
    box = np.asarray(bounds, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] == 0:
        raise ParameterDomainError("bounds", box.shape, "expected a sequence of (lower, upper) pairs")
    lb, ub = box[:, 0], box[:, 1]
    if not (np.all(np.isfinite(box)) and np.all(lb < ub)):
        raise ParameterDomainError("bounds", None, "bounds must be finite with lower < upper")

    rng = np.random.default_rng(seed)
    n, d = cfg.swarm_size, lb.size

    def to_theta(u: np.ndarray) -> np.ndarray:
        return np.clip(lb + u * (ub - lb), lb, ub)

    def evaluate(positions: np.ndarray) -> np.ndarray:
        points = [to_theta(p) for p in positions]
        values = map_fn(cost, points) if map_fn is not None else [cost(p) for p in points]
        return np.asarray(values, dtype=float)

    x = rng.random((n, d))
    v = rng.uniform(-1.0, 1.0, (n, d)) * cfg.v_init
    f = evaluate(x)
    p_best, p_cost = x.copy(), f.copy()
    g = int(np.argmin(p_cost))
    g_best, g_cost = p_best[g].copy(), float(p_cost[g])
    trace = [g_cost]
    logger.info("--- [PSO] %d particles, %d dimensions, %d iterations ---", n, d, cfg.max_iter)

    iterations = 0
    for it in range(1, cfg.max_iter + 1):
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        v = (
            cfg.inertia * v
            + cfg.cognitive * r1 * (p_best - x)
            + cfg.social * r2 * (g_best - x)
        )
        v = np.clip(v, -cfg.v_max, cfg.v_max)
        x, v = _reflect(x + v, v)
        f = evaluate(x)

        better = f < p_cost
        p_best[better] = x[better]
        p_cost[better] = f[better]
        g = int(np.argmin(p_cost))
        if p_cost[g] < g_cost:
            g_best, g_cost = p_best[g].copy(), float(p_cost[g])
        trace.append(g_cost)
        iterations = it
        if it % 100 == 0:
            logger.debug("PSO iteration %d: best cost %.6g", it, g_cost)
        if cfg.stall_iter is not None and it >= cfg.stall_iter:
            earlier = trace[it - cfg.stall_iter]
            if earlier - g_cost <= cfg.stall_tol * abs(earlier):
                logger.info("PSO stalled at iteration %d (no improvement over %d iterations)", it, cfg.stall_iter)
                break

    logger.info("--- [PSO] Finished after %d iteration(s): best cost %.6g ---", iterations, g_cost)
    return PSOResult(
        theta=to_theta(g_best),
        cost=g_cost if math.isfinite(g_cost) else math.inf,
        trace=np.asarray(trace),
        iterations=iterations,
        evaluations=n * (iterations + 1),
    )
