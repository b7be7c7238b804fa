"""Variable-step BDF (orders 1-2) for ``M dx/dt = F(x) + B i(t)``.

Modified Newton with one sparse LU per step attempt; the Jacobian is reused
across steps until Newton struggles. Local errors are estimated from the
predictor-corrector difference on differential components only; algebraic
components (zero rows of M) follow from the constraints. Steps stop exactly
on current discontinuities, where the algebraic variables are re-solved
with the differential state held fixed.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from spme_eis.errors import ParameterDomainError, SolverError, StoichiometryGuardError
from spme_eis.model.dae import DaeSystem
from spme_eis.simulate.profile import CurrentProfile

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps
NEWTON_MAXITER = 6
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
SAFETY = 0.9


@dataclass
class SolverStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_newton: int = 0
    n_jac: int = 0
    n_lu: int = 0
    n_reinit: int = 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    voltage: np.ndarray
    current: np.ndarray
    states: np.ndarray | None = None
    stats: SolverStats = field(default_factory=SolverStats)

    def __len__(self) -> int:
        return self.t.size


@dataclass
class _Point:
    t: float
    x: np.ndarray
    xdot: np.ndarray


class BdfIntegrator:
    def __init__(
        self,
        dae: DaeSystem,
        profile: CurrentProfile,
        atol: float = 1e-9,
        rtol: float | None = None,
        first_step: float = 1e-6,
        max_step: float = math.inf,
    ) -> None:
        if atol <= 0.0:
            raise ParameterDomainError("tol", atol, "tolerance must be > 0")
        self.dae = dae
        self.profile = profile
        self.atol = atol
        self.rtol = atol if rtol is None else rtol
        self.first_step = first_step
        self.max_step = max_step
        self.newton_tol = max(10.0 * EPS / self.rtol, min(0.03, self.rtol**0.5))
        self.mass = dae.mass_matrix.tocsr()
        self.alg = dae.algebraic_mask
        self.diff = ~self.alg
        self.stats = SolverStats()
        self._jac: sp.csr_matrix | None = None
        self._jac_fresh = False

    # -- helpers -------------------------------------------------------------

    def _scale(self, *xs: np.ndarray) -> np.ndarray:
        mag = np.abs(xs[0])
        for x in xs[1:]:
            mag = np.maximum(mag, np.abs(x))
        return self.atol + self.rtol * mag

    @staticmethod
    def _wrms(e: np.ndarray, scale: np.ndarray) -> float:
        if e.size == 0:
            return 0.0
        return float(np.sqrt(np.mean((e / scale) ** 2)))

    def _current(self, t: float, seg_end: float) -> float:
        # left limit at the end of an integration interval
        if t >= seg_end:
            t = np.nextafter(seg_end, -math.inf)
        return self.profile.current_at(t)

    def _jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        self.stats.n_jac += 1
        self._jac = self.dae.jacobian(x)
        self._jac_fresh = True
        return self._jac

    def _derivative(self, x: np.ndarray, current: float) -> np.ndarray:
        """dx/dt of the differential components; zero for algebraic ones."""
        xdot = np.zeros_like(x)
        if np.any(self.diff):
            rhs = self.dae.rhs(x, current)[self.diff]
            m_dd = self.mass[self.diff][:, self.diff].tocsc()
            xdot[self.diff] = np.atleast_1d(spsolve(m_dd, rhs))
        return xdot

    def consistent_algebraic(self, x: np.ndarray, current: float, t: float | None = None) -> np.ndarray:
        """Solve the algebraic rows for the algebraic variables, differential part fixed."""
        x = x.copy()
        if not np.any(self.alg):
            return x
        idx = np.flatnonzero(self.alg)
        for _ in range(30):
            r = self.dae.rhs(x, current)[idx]
            jac = self.dae.jacobian(x)
            j_aa = jac[idx][:, idx].tocsc()
            dx = np.atleast_1d(spsolve(j_aa, r))
            x[idx] -= dx
            if np.max(np.abs(dx) / self._scale(x[idx])) < 1e-6:
                self.stats.n_reinit += 1
                return x
        raise SolverError("consistent initialization of algebraic variables did not converge", t)

    # -- one step ------------------------------------------------------------

    def _coefficients(self, order: int, h: float, hist: deque[_Point]) -> tuple[float, np.ndarray, np.ndarray]:
        """alpha0, the history part of h*dx/dt, and the predictor."""
        cur = hist[-1]
        if order == 1:
            return 1.0, -cur.x, cur.x + h * cur.xdot
        prev = hist[-2]
        h1 = cur.t - prev.t
        w = h / h1
        alpha0 = (1.0 + 2.0 * w) / (1.0 + w)
        history = -(1.0 + w) * cur.x + (w * w / (1.0 + w)) * prev.x
        pp = hist[-3]
        h2 = prev.t - pp.t
        # quadratic extrapolation through the last three points (Newton form)
        d1 = (cur.x - prev.x) / h1
        d0 = (prev.x - pp.x) / h2
        dd = (d1 - d0) / (h1 + h2)
        predictor = cur.x + h * d1 + h * (h + h1) * dd
        return alpha0, history, predictor

    def _error_ratio(self, order: int, h: float, hist: deque[_Point]) -> float:
        """Fraction of (corrected - predicted) that is local truncation error."""
        if order == 1:
            return 0.5
        cur, prev, pp = hist[-1], hist[-2], hist[-3]
        h1 = cur.t - prev.t
        h2 = prev.t - pp.t
        w = h / h1
        alpha0 = (1.0 + 2.0 * w) / (1.0 + w)
        lte = h * h * (h + h1) / (6.0 * alpha0)
        extrap = h * (h + h1) * (h + h1 + h2) / 6.0
        return lte / (extrap + lte)

    def _newton(
        self, t_new: float, h: float, alpha0: float, history: np.ndarray, guess: np.ndarray, current: float
    ) -> np.ndarray | None:
        jac = self._jac if self._jac is not None else self._jacobian(guess)
        c = alpha0 / h
        lu = splu((c * self.mass - jac).tocsc())
        self.stats.n_lu += 1
        m_hist = self.mass @ history / h
        x = guess.copy()
        norm_old = None
        for _ in range(NEWTON_MAXITER):
            self.stats.n_newton += 1
            g = c * (self.mass @ x) + m_hist - self.dae.rhs(x, current)
            if not np.all(np.isfinite(g)):
                return None
            dx = lu.solve(-g)
            x += dx
            norm = self._wrms(dx, self._scale(x))
            if norm == 0.0:
                return x
            if norm_old is not None:
                rate = norm / norm_old
                if rate >= 1.0:
                    return None
                if rate / (1.0 - rate) * norm < self.newton_tol:
                    return x
            norm_old = norm
        return None

    # -- driver --------------------------------------------------------------

    def run(
        self, x0, out_times: Sequence[float], store_states: bool = True, reinitialize: bool = False
    ) -> Trajectory:
        out = np.asarray(out_times, dtype=float)
        if out.ndim != 1 or out.size == 0:
            raise ParameterDomainError("out_times", out.shape, "need at least one output time")
        if out[0] < 0.0 or np.any(np.diff(out) <= 0.0):
            raise ParameterDomainError("out_times", None, "output times must be >= 0 and strictly increasing")
        t_end = float(out[-1])
        if t_end > self.profile.duration * (1.0 + 1e-12):
            raise ParameterDomainError("out_times", t_end, "output beyond the end of the current profile")

        x = np.array(x0, dtype=float)
        n = x.size
        if reinitialize:
            x = self.consistent_algebraic(x, self.profile.current_at(0.0), 0.0)
        r_alg = self.dae.rhs(x, self.profile.current_at(0.0))[self.alg]
        if r_alg.size and np.max(np.abs(r_alg)) > max(10.0 * self.atol, 1e-10):
            raise SolverError(
                f"initial state is not consistent (algebraic residual {np.max(np.abs(r_alg)):.3e})", 0.0
            )

        stops = [p for p in self.profile.breakpoints() if p < t_end] + [t_end]
        states = np.empty((out.size, n)) if store_states else None
        voltage = np.empty(out.size)
        current = np.empty(out.size)
        k_out = 0

        def emit(idx: int, t: float, xv: np.ndarray) -> None:
            voltage[idx] = xv[self.dae.voltage_index]
            current[idx] = xv[self.dae.current_index]
            if states is not None:
                states[idx] = xv

        t = 0.0
        seg_start = 0.0
        for seg_end in stops:
            if seg_start > 0.0:
                x = self.consistent_algebraic(x, self.profile.current_at(seg_start), seg_start)
            hist: deque[_Point] = deque(maxlen=3)
            hist.append(_Point(t, x.copy(), self._derivative(x, self.profile.current_at(t))))
            while k_out < out.size and out[k_out] == t:
                emit(k_out, t, x)
                k_out += 1
            h = min(self.first_step, seg_end - t, self.max_step)
            n_accepted = 0
            guard: StoichiometryGuardError | None = None

            while t < seg_end:
                order = 2 if n_accepted >= 2 else 1
                h = min(h, self.max_step)
                t_new = t + h
                if t_new >= seg_end or seg_end - t_new < 1e-12 * max(1.0, abs(seg_end)):
                    t_new = seg_end
                    h = seg_end - t
                if h <= 1e-14 * max(1.0, abs(t)):
                    if guard is not None:
                        raise StoichiometryGuardError(guard.what, guard.index, guard.value, t) from guard
                    raise SolverError("step size underflow", t)

                alpha0, history, predictor = self._coefficients(order, h, hist)
                i_new = self._current(t_new, seg_end)
                try:
                    x_new = self._newton(t_new, h, alpha0, history, predictor, i_new)
                except StoichiometryGuardError as exc:
                    guard = exc
                    x_new = None
                if x_new is None:
                    self.stats.n_rejected += 1
                    if not self._jac_fresh:
                        # retry the same step with a fresh Jacobian first
                        try:
                            self._jacobian(predictor)
                            x_new = self._newton(t_new, h, alpha0, history, predictor, i_new)
                        except StoichiometryGuardError as exc:
                            guard = exc
                            x_new = None
                    if x_new is None:
                        self._jac = None
                        h *= 0.5
                        continue

                ratio = self._error_ratio(order, h, hist)
                err = ratio * (x_new - predictor)[self.diff]
                scale = self._scale(hist[-1].x, x_new)[self.diff]
                err_norm = self._wrms(err, scale)
                if err_norm > 1.0:
                    self.stats.n_rejected += 1
                    factor = max(MIN_FACTOR, SAFETY * err_norm ** (-1.0 / (order + 1)))
                    h *= factor
                    continue

                self.stats.n_steps += 1
                self._jac_fresh = False
                guard = None
                xdot = (alpha0 * x_new + history) / h
                hist.append(_Point(t_new, x_new, xdot))

                while k_out < out.size and out[k_out] < t_new:
                    emit(k_out, out[k_out], self._interpolate(hist, out[k_out]))
                    k_out += 1

                t = t_new
                x = x_new
                n_accepted += 1
                factor = MAX_FACTOR if err_norm == 0.0 else min(MAX_FACTOR, SAFETY * err_norm ** (-1.0 / (order + 1)))
                h = h * max(factor, MIN_FACTOR)
            seg_start = seg_end

        while k_out < out.size:
            emit(k_out, out[k_out], x)
            k_out += 1
        logger.debug(
            "Integrated to t=%g s: %d steps, %d rejected, %d LU",
            t, self.stats.n_steps, self.stats.n_rejected, self.stats.n_lu,
        )
        return Trajectory(t=out.copy(), voltage=voltage, current=current, states=states, stats=self.stats)

    @staticmethod
    def _interpolate(hist: deque[_Point], t: float) -> np.ndarray:
        """Quadratic (or linear after a restart) interpolant through the last points."""
        if len(hist) < 3:
            a, b = hist[-2], hist[-1]
            s = (t - a.t) / (b.t - a.t)
            return a.x + s * (b.x - a.x)
        p0, p1, p2 = hist[-3], hist[-2], hist[-1]
        l0 = (t - p1.t) * (t - p2.t) / ((p0.t - p1.t) * (p0.t - p2.t))
        l1 = (t - p0.t) * (t - p2.t) / ((p1.t - p0.t) * (p1.t - p2.t))
        l2 = (t - p0.t) * (t - p1.t) / ((p2.t - p0.t) * (p2.t - p1.t))
        return l0 * p0.x + l1 * p1.x + l2 * p2.x


def integrate(
    dae: DaeSystem,
    x0,
    profile: CurrentProfile,
    out_times: Sequence[float],
    tol: float = 1e-9,
    *,
    rtol: float | None = None,
    store_states: bool = True,
    first_step: float = 1e-6,
    max_step: float = math.inf,
    reinitialize: bool = False,
) -> Trajectory:
    """Integrate from ``x0`` at t = 0 and sample at ``out_times`` [s].

    With ``reinitialize`` the algebraic part of ``x0`` is first solved for
    the current at t = 0; otherwise ``x0`` must already be consistent.
    """
    solver = BdfIntegrator(dae, profile, atol=tol, rtol=rtol, first_step=first_step, max_step=max_step)
    return solver.run(x0, out_times, store_states=store_states, reinitialize=reinitialize)
