"""Impedance dataset files, raw EIS records and the SNLDR linearity check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from spme_eis.errors import DatasetFormatError, ParameterDomainError
from spme_eis.formats.files import atomic_write_text, parse_float, read_columns
from spme_eis.impedance import ImpedanceDataset, Spectrum

logger = logging.getLogger(__name__)

DATASET_HEADER = "# soc_percent, f_hz, re_ohm, im_ohm"
BODE_HEADER = "# soc_percent, f_hz, re_ohm, im_ohm, mag_ohm, phase_deg"
RAW_EIS_HEADER = "# soc_percent, ocv_v, f_hz, re_ohm, im_ohm, v_fund_v, v_2nd_v"

# Measured spectra come from hybrid EIS: a voltage perturbation around zero DC current.
HYBRID_EIS_EXCITATION = {"excitation": "hybrid", "v_rms_v": 0.003, "i_dc_a": 0.0}
CURRENT_EXCITATION = {"excitation": "current", "i_dc_a": 0.0}


def _check_point(path: Path, lineno: int, soc: float, f: float) -> None:
    if not 0.0 <= soc <= 100.0:
        raise DatasetFormatError(path, lineno, f"soc {soc!r} outside [0, 100]")
    if not (f > 0.0 and math.isfinite(f)):
        raise DatasetFormatError(path, lineno, f"frequency {f!r} must be finite and > 0")


def write_impedance_dataset(
    dataset: ImpedanceDataset,
    path: Path,
    bode: bool = False,
    metadata: Mapping[str, object] | None = None,
) -> None:
    """One row per (SOC, frequency); ``bode`` appends magnitude and phase columns.

    ``metadata`` goes below the header as ``# key = value`` comment lines.
    """
    lines = [BODE_HEADER if bode else DATASET_HEADER]
    lines.extend(f"# {key} = {value}" for key, value in (metadata or {}).items())
    for s in dataset:
        soc = float(s.soc)
        for f, z in zip(s.f_hz.tolist(), s.z.tolist()):
            row = f"{soc!r}, {f!r}, {z.real!r}, {z.imag!r}"
            if bode:
                row += f", {abs(z)!r}, {math.degrees(math.atan2(z.imag, z.real))!r}"
            lines.append(row)
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.info("Wrote %d spectra (%d points) to %s", len(dataset), dataset.n_points, path)


def read_dataset_metadata(path: Path) -> dict[str, str]:
    """``# key = value`` comment lines of a dataset file, values as text."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DatasetFormatError(path, 0, f"cannot read file: {exc}") from exc
    meta = {}
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped.startswith("#") or "=" not in stripped:
            continue
        key, _, value = stripped.lstrip("#").partition("=")
        meta[key.strip()] = value.strip()
    return meta


def parse_impedance_dataset(path: Path) -> ImpedanceDataset:
    """Read a dataset file; rows may come in any order and Bode columns are ignored."""
    path = Path(path)
    rows = read_columns(path, 4, 6)
    if not rows:
        raise DatasetFormatError(path, 0, "no data rows")
    by_soc: dict[float, list[tuple[float, complex]]] = {}
    seen: set[tuple[float, float]] = set()
    for lineno, parts in rows:
        if len(parts) == 5:
            raise DatasetFormatError(path, lineno, "expected 4 or 6 columns, got 5")
        soc, f, re, im = (parse_float(path, lineno, p) for p in parts[:4])
        _check_point(path, lineno, soc, f)
        if not (math.isfinite(re) and math.isfinite(im)):
            raise DatasetFormatError(path, lineno, "impedance must be finite")
        if (soc, f) in seen:
            raise DatasetFormatError(path, lineno, f"duplicate point soc={soc!r}, f={f!r}")
        seen.add((soc, f))
        by_soc.setdefault(soc, []).append((f, complex(re, im)))

    spectra = []
    for soc, points in by_soc.items():
        points.sort(key=lambda p: p[0])
        spectra.append(Spectrum(soc, np.array([p[0] for p in points]), np.array([p[1] for p in points])))
    return ImpedanceDataset(spectra)


# ---------------------------------------------------------------------------
# Raw EIS records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RawEisRecord:
    """One operating point of a measurement, with optional harmonic magnitudes."""

    soc: float
    ocv: float
    f_hz: np.ndarray
    z: np.ndarray
    v_fund: np.ndarray | None = None
    v_2nd: np.ndarray | None = None

    @property
    def has_harmonics(self) -> bool:
        return self.v_fund is not None and self.v_2nd is not None

    def spectrum(self) -> Spectrum:
        return Spectrum(self.soc, self.f_hz, self.z)


def parse_raw_eis(path: Path) -> list[RawEisRecord]:
    path = Path(path)
    rows = read_columns(path, 5, 7)
    grouped: dict[float, list[tuple[int, list[str]]]] = {}
    for lineno, parts in rows:
        soc = parse_float(path, lineno, parts[0])
        grouped.setdefault(soc, []).append((lineno, parts))

    records = []
    for soc, group in grouped.items():
        ocvs = {parse_float(path, n, p[1]) for n, p in group}
        if len(ocvs) != 1:
            raise DatasetFormatError(path, group[0][0], f"soc {soc!r} lists more than one OCV")
        f, z, v1, v2 = [], [], [], []
        harmonics = True
        for lineno, parts in group:
            freq = parse_float(path, lineno, parts[2])
            _check_point(path, lineno, soc, freq)
            if freq in f:
                raise DatasetFormatError(path, lineno, f"duplicate point soc={soc!r}, f={freq!r}")
            f.append(freq)
            z.append(complex(parse_float(path, lineno, parts[3]), parse_float(path, lineno, parts[4])))
            extra = parts[5:] + [""] * (7 - len(parts))
            if extra[0] and extra[1]:
                v1.append(parse_float(path, lineno, extra[0]))
                v2.append(parse_float(path, lineno, extra[1]))
            else:
                harmonics = False
        order = np.argsort(f)
        records.append(RawEisRecord(
            soc=soc,
            ocv=ocvs.pop(),
            f_hz=np.asarray(f)[order],
            z=np.asarray(z)[order],
            v_fund=np.asarray(v1)[order] if harmonics else None,
            v_2nd=np.asarray(v2)[order] if harmonics else None,
        ))
    return sorted(records, key=lambda r: r.soc)


def records_to_dataset(records: Sequence[RawEisRecord]) -> ImpedanceDataset:
    return ImpedanceDataset([r.spectrum() for r in records])


# ---------------------------------------------------------------------------
# SNLDR
# ---------------------------------------------------------------------------


def snldr(v_fund: float, v_2nd: float) -> float:
    """|V(w) / V(2w)|; infinite when there is no second harmonic."""
    if not v_fund > 0.0:
        raise ParameterDomainError("v_fund", v_fund, "fundamental magnitude must be > 0")
    if v_2nd == 0.0:
        return math.inf
    return abs(v_fund / v_2nd)


@dataclass(frozen=True)
class SnldrEntry:
    soc: float
    f_hz: float
    value: float | None
    flagged: bool

    @property
    def available(self) -> bool:
        return self.value is not None


def snldr_report(records: Sequence[RawEisRecord], threshold: float | None = None) -> list[SnldrEntry]:
    """SNLDR at the lowest frequency of each record.

    Records without harmonic magnitudes report ``value=None``. With a
    threshold, values below it are flagged as nonlinear.
    """
    report = []
    for r in records:
        k = int(np.argmin(r.f_hz))
        if not r.has_harmonics:
            report.append(SnldrEntry(r.soc, float(r.f_hz[k]), None, False))
            continue
        value = snldr(float(r.v_fund[k]), float(r.v_2nd[k]))
        flagged = threshold is not None and value < threshold
        if flagged:
            logger.warning("SNLDR %.3g below %.3g at soc=%g", value, threshold, r.soc)
        report.append(SnldrEntry(r.soc, float(r.f_hz[k]), value, flagged))
    return report
