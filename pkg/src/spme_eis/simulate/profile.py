"""Piecewise current profiles (charging current positive, in A)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spme_eis.errors import ParameterDomainError


@dataclass(frozen=True)
class Constant:
    duration: float
    current: float

    def at(self, tau: float) -> float:
        return self.current

    def jumps(self) -> list[float]:
        return []


@dataclass(frozen=True)
class Sinusoid:
    """``amplitude * sin(2 pi f tau)``, tau measured from the segment start."""

    duration: float
    amplitude: float
    f_hz: float

    def at(self, tau: float) -> float:
        return self.amplitude * math.sin(2.0 * math.pi * self.f_hz * tau)

    def jumps(self) -> list[float]:
        return []


@dataclass(frozen=True, eq=False)
class Sampled:
    """Zero-order hold over a (t, i) table; ``t`` relative to the segment start."""

    duration: float
    t: np.ndarray
    i: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=float)
        i = np.asarray(self.i, dtype=float)
        if t.ndim != 1 or t.shape != i.shape or t.size == 0:
            raise ParameterDomainError("t", t.shape, "sampled table needs matching non-empty t and i")
        if np.any(np.diff(t) <= 0.0):
            raise ParameterDomainError("t", None, "sample times must be strictly increasing")
        if t[0] != 0.0:
            raise ParameterDomainError("t", float(t[0]), "sample table must start at t = 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "i", i)

    def at(self, tau: float) -> float:
        k = int(np.searchsorted(self.t, tau, side="right")) - 1
        return float(self.i[max(k, 0)])

    def jumps(self) -> list[float]:
        change = np.nonzero(np.diff(self.i))[0] + 1
        return [float(self.t[k]) for k in change if self.t[k] < self.duration]


Segment = Constant | Sinusoid | Sampled


class CurrentProfile:
    def __init__(self, segments: Sequence[Segment]) -> None:
        if not segments:
            raise ParameterDomainError("segments", 0, "profile needs at least one segment")
        for k, seg in enumerate(segments):
            if not (seg.duration > 0.0 and math.isfinite(seg.duration)):
                raise ParameterDomainError(f"segments[{k}].duration", seg.duration, "must be > 0")
        self.segments = list(segments)
        self._starts = np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    @property
    def duration(self) -> float:
        return float(self._starts[-1])

    def _locate(self, t: float) -> int:
        k = int(np.searchsorted(self._starts, t, side="right")) - 1
        return min(max(k, 0), len(self.segments) - 1)

    def current_at(self, t: float) -> float:
        """Current at ``t``; segments are closed on the left."""
        k = self._locate(t)
        return self.segments[k].at(t - self._starts[k])

    def breakpoints(self) -> list[float]:
        """Interior times where the current may jump, sorted."""
        points: set[float] = set()
        for k, seg in enumerate(self.segments):
            start = float(self._starts[k])
            if k > 0:
                points.add(start)
            points.update(start + tau for tau in seg.jumps() if tau > 0.0)
        return sorted(p for p in points if 0.0 < p < self.duration)

    def segment_start(self, k: int) -> float:
        return float(self._starts[k])


def rest_discharge_charge_protocol(current: float = 5.0) -> CurrentProfile:
    """Rest 420 s, discharge 3180 s, rest 1200 s, charge 1200 s, rest 1200 s."""
    return CurrentProfile([
        Constant(420.0, 0.0),
        Constant(3180.0, -current),
        Constant(1200.0, 0.0),
        Constant(1200.0, current),
        Constant(1200.0, 0.0),
    ])


def sample_times(profile: CurrentProfile, dt: float = 10.0) -> np.ndarray:
    """``n * dt`` for ``n = 0 .. N-1`` with ``N * dt`` the profile duration."""
    if dt <= 0.0:
        raise ParameterDomainError("dt", dt, "sampling period must be > 0")
    n = int(round(profile.duration / dt))
    return np.arange(n) * dt


def sinusoid_profile(amplitude: float, f_hz: float, n_periods: int) -> CurrentProfile:
    return CurrentProfile([Sinusoid(n_periods / f_hz, amplitude, f_hz)])
