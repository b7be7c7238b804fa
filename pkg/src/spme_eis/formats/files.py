"""Parameter, OCP, trajectory and manifest files.

All numeric output uses ``repr`` so that every value written by this
package parses back to the identical float.
"""

from __future__ import annotations

import json
import logging
import os
import platform
import tempfile
from dataclasses import fields
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from dotenv import dotenv_values

from spme_eis.errors import ConfigError, DatasetFormatError, UnknownParameterError
from spme_eis.model.ocp import OcpCurve
from spme_eis.model.parameters import GroupedParameters, grouped_field_names
from spme_eis.simulate.integrator import Trajectory
from spme_eis.simulate.profile import CurrentProfile, Sampled

logger = logging.getLogger(__name__)

OCP_HEADER = "# stoichiometry, potential_V"
TRAJECTORY_HEADER = "# t_s, i_a, v_v"


def atomic_write_text(path: Path, text: str) -> None:
    """Write to a temporary sibling and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_columns(path: Path, n_min: int, n_max: int | None = None) -> list[tuple[int, list[str]]]:
    """Comma-separated data rows as (line number, fields); ``#`` lines are comments."""
    path = Path(path)
    n_max = n_max or n_min
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetFormatError(path, 0, f"cannot read file: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = [p.strip() for p in stripped.split(",")]
        if not n_min <= len(parts) <= n_max:
            expected = str(n_min) if n_min == n_max else f"{n_min}-{n_max}"
            raise DatasetFormatError(path, lineno, f"expected {expected} columns, got {len(parts)}")
        rows.append((lineno, parts))
    return rows


def parse_float(path: Path, lineno: int, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatasetFormatError(path, lineno, f"not a number: {text!r}") from None


# ---------------------------------------------------------------------------
# Grouped parameters
# ---------------------------------------------------------------------------


def read_parameter_file(path: Path) -> GroupedParameters:
    """``key = value`` grouped parameters; missing ``q_th_*`` are derived from ``q_meas``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"parameter file not found: {path}")
    raw = dotenv_values(path, interpolate=False)
    known = grouped_field_names()
    values: dict[str, float] = {}
    for key, text in raw.items():
        if key not in known:
            raise UnknownParameterError(key, known)
        try:
            values[key] = float(text or "")
        except ValueError:
            raise ConfigError(f"{path}: {key} is not a number: {text!r}") from None

    derive = "q_th_pos" not in values or "q_th_neg" not in values
    values.setdefault("q_th_pos", 1.0)
    values.setdefault("q_th_neg", 1.0)
    missing = [name for name in known if name not in values and name != "temperature"]
    if missing:
        raise ConfigError(f"{path}: missing grouped parameters: {', '.join(missing)}")
    params = GroupedParameters(**values)
    return params.with_theoretical_capacities() if derive else params


def write_parameter_file(params: GroupedParameters, path: Path) -> None:
    lines = [f"{f.name} = {float(getattr(params, f.name))!r}" for f in fields(params)]
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# OCP tables
# ---------------------------------------------------------------------------


def read_ocp_file(path: Path, name: str = "") -> OcpCurve:
    path = Path(path)
    rows = read_columns(path, 2)
    if len(rows) < 2:
        raise DatasetFormatError(path, 0, "an OCP table needs at least two rows")
    c = [parse_float(path, lineno, parts[0]) for lineno, parts in rows]
    u = [parse_float(path, lineno, parts[1]) for lineno, parts in rows]
    return OcpCurve(np.array(c), np.array(u), name=name or path.stem)


def write_ocp_file(curve: OcpCurve, path: Path) -> None:
    lines = [OCP_HEADER]
    lines.extend(f"{c!r}, {u!r}" for c, u in zip(curve.stoichiometry.tolist(), curve.potential.tolist()))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Trajectories and drive cycles
# ---------------------------------------------------------------------------


def write_trajectory(traj: Trajectory, path: Path) -> None:
    lines = [TRAJECTORY_HEADER]
    lines.extend(
        f"{t!r}, {i!r}, {v!r}"
        for t, i, v in zip(traj.t.tolist(), traj.current.tolist(), traj.voltage.tolist())
    )
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.info("Wrote trajectory (%d samples) to %s", len(traj), path)


def read_trajectory(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """(t, i, v) columns; ``v`` is None when the file has only two columns."""
    path = Path(path)
    rows = read_columns(path, 2, 3)
    if not rows:
        raise DatasetFormatError(path, 0, "no samples")
    t = np.array([parse_float(path, n, p[0]) for n, p in rows])
    i = np.array([parse_float(path, n, p[1]) for n, p in rows])
    has_v = all(len(p) == 3 for _, p in rows)
    v = np.array([parse_float(path, n, p[2]) for n, p in rows]) if has_v else None
    for (lineno, _), dt in zip(rows[1:], np.diff(t)):
        if dt <= 0.0:
            raise DatasetFormatError(path, lineno, "time stamps must be strictly increasing")
    return t, i, v


def read_profile(path: Path) -> CurrentProfile:
    """Drive cycle from ``t_s, i_a[, v_v]`` samples held constant until the next stamp.

    The last sample is held for one more sampling interval.
    """
    t, i, _ = read_trajectory(path)
    if t.size < 2:
        raise DatasetFormatError(path, 0, "a drive cycle needs at least two samples")
    rel = t - t[0]
    duration = float(rel[-1] + (rel[-1] - rel[-2]))
    return CurrentProfile([Sampled(duration, rel, i)])


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(
    out_dir: Path,
    command: str,
    config_digest: str,
    seed: int | None,
    outputs: Sequence[Path],
    extra: dict[str, Any] | None = None,
) -> Path:
    manifest = {
        "command": command,
        "config_sha256": config_digest,
        "seed": seed,
        "created": datetime.now(timezone.utc).isoformat(),
        "versions": {
            "spme-eis": _version("spme-eis"),
            "numpy": np.__version__,
            "scipy": _version("scipy"),
            "python": platform.python_version(),
        },
        "outputs": [str(Path(p).name) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
