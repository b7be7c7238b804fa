"""Exception hierarchy shared by every module.

Each exception carries a ``category`` that the CLI maps to its exit status:
``numerical`` -> 1, ``usage`` -> 2, ``schema``/``io`` -> 3.
"""

from __future__ import annotations

EXIT_CODES = {
    "numerical": 1,
    "usage": 2,
    "schema": 3,
    "io": 3,
}


class SpmeError(Exception):
    category = "numerical"

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]


class ParameterDomainError(SpmeError, ValueError):
    """A parameter value violates its domain; ``field`` names the offender."""

    category = "usage"

    def __init__(self, field: str, value: object, reason: str) -> None:
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r}: {reason}")


class UnknownParameterError(SpmeError, KeyError):
    category = "usage"

    def __init__(self, name: str, known: list[str] | None = None) -> None:
        self.name = name
        hint = f" (expected one of: {', '.join(known)})" if known else ""
        super().__init__(f"unknown parameter {name!r}{hint}")

    def __str__(self) -> str:
        return self.args[0]


class MeshError(SpmeError, ValueError):
    category = "usage"


class OcpDomainError(SpmeError, ValueError):
    """OCP evaluated outside its tabulated stoichiometry range."""


class StoichiometryGuardError(SpmeError):
    """A surface stoichiometry or electrolyte concentration left its valid range."""

    def __init__(self, what: str, index: int, value: float, time: float | None = None) -> None:
        self.what = what
        self.index = index
        self.value = value
        self.time = time
        where = f" at t={time:.6g} s" if time is not None else ""
        super().__init__(f"{what} out of range in cell {index}: {value!r}{where}")


class SolverError(SpmeError):
    """Time integration failed (Newton divergence or step-size underflow)."""

    def __init__(self, message: str, time: float | None = None) -> None:
        self.time = time
        where = f" at t={time:.6g} s" if time is not None else ""
        super().__init__(f"{message}{where}")


class ImpedanceSolveError(SpmeError):
    def __init__(self, omega: float, soc: float | None, reason: str) -> None:
        self.omega = omega
        self.soc = soc
        super().__init__(f"impedance solve failed at omega={omega!r} rad/s, soc={soc!r}: {reason}")


class ArcNotResolvedError(SpmeError):
    """No interior -Im(Z) maximum, so the kinetic arc cannot be located."""


class LeakageError(SpmeError):
    """The sampling window does not span an integer number of periods."""


class GridMismatchError(SpmeError):
    category = "schema"


class DatasetFormatError(SpmeError):
    category = "schema"

    def __init__(self, path: object, line: int, reason: str) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class ConfigError(SpmeError):
    category = "schema"
