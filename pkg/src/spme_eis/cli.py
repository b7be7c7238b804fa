from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from spme_eis.config import RunConfig, Settings, load_run_config
from spme_eis.dispatcher import JobDispatcher
from spme_eis.errors import ArcNotResolvedError, DatasetFormatError, SpmeError
from spme_eis.fit.multistart import multistart
from spme_eis.fit.problem import FitProblem, VoltageTarget
from spme_eis.formats.datasets import (
    CURRENT_EXCITATION,
    HYBRID_EIS_EXCITATION,
    parse_impedance_dataset,
    parse_raw_eis,
    records_to_dataset,
    snldr_report,
    write_impedance_dataset,
)
from spme_eis.formats.files import (
    atomic_write_text,
    read_ocp_file,
    read_parameter_file,
    read_profile,
    read_trajectory,
    write_manifest,
    write_parameter_file,
    write_trajectory,
)
from spme_eis.impedance import (
    FrequencyGrid,
    ImpedanceDataset,
    SWEEP_PARAMETERS,
    semicircle_diameter,
    sensitivity_sweep,
    spectrum,
    spectrum_at_soc,
)
from spme_eis.model.dae import DaeSystem, Mesh, assemble_dae, equilibrium_state
from spme_eis.model.ocp import OcpCurve, synthetic_negative_ocp, synthetic_positive_ocp
from spme_eis.model.parameters import GroupedParameters, reference_grouped
from spme_eis.simulate.bruteforce import brute_force_spectrum
from spme_eis.simulate.integrator import integrate
from spme_eis.simulate.profile import rest_discharge_charge_protocol, sample_times

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# flag dest -> RunConfig field
_OVERRIDES = {
    "model_mode": "mode",
    "n_r": "n_r",
    "n_x_neg": "n_x_neg",
    "n_sep": "n_sep",
    "n_x_pos": "n_x_pos",
    "param_file": "parameter_file",
    "ocp_pos": "ocp_pos_file",
    "ocp_neg": "ocp_neg_file",
    "fmin": "f_min",
    "fmax": "f_max",
    "ppd": "ppd",
    "n_freq": "n_freq",
    "soc": "socs",
    "fit_mode": "fit_mode",
    "runs": "runs",
    "max_iter": "max_iter",
    "swarm": "swarm_size",
    "seed": "seed",
    "amplitude": "amplitude",
    "periods": "n_periods",
    "discard": "n_discard",
    "tol": "tol",
    "out": "output_dir",
}


@dataclass
class RunContext:
    config: RunConfig
    params: GroupedParameters
    curves: tuple[OcpCurve, OcpCurve]
    mesh: Mesh
    dispatcher: JobDispatcher
    out_dir: Path

    def dae(self) -> DaeSystem:
        return assemble_dae(self.params, self.curves, self.mesh, self.config.mode)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="key = value run configuration file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--workers", type=int, help="parallel jobs (1 = sequential)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--param-file", type=Path, help="grouped parameter file")
    common.add_argument("--ocp-pos", type=Path, help="positive electrode OCP table")
    common.add_argument("--ocp-neg", type=Path, help="negative electrode OCP table")
    common.add_argument("--n-r", type=int)
    common.add_argument("--n-x-neg", type=int)
    common.add_argument("--n-sep", type=int)
    common.add_argument("--n-x-pos", type=int)
    return common


def _grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fmin", type=float, help="lowest frequency [Hz]")
    p.add_argument("--fmax", type=float, help="highest frequency [Hz]")
    steps = p.add_mutually_exclusive_group()
    steps.add_argument("--ppd", type=float, help="points per decade")
    steps.add_argument("--n-freq", type=int, help="total number of frequencies")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="spme-eis",
        description="Impedance, simulation and parameter estimation with a grouped single particle model.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    model_mode = dict(dest="model_mode", choices=["spme", "spm"], help="model variant")

    p = sub.add_parser("impedance", parents=[common], argument_default=argparse.SUPPRESS,
                       help="frequency-domain spectra at one or more SOCs")
    p.add_argument("--soc", type=float, nargs="+", help="state of charge [%%]")
    _grid_flags(p)
    p.add_argument("--mode", **model_mode)
    p.add_argument("--bode", action="store_true", help="add magnitude and phase columns")

    p = sub.add_parser("bruteforce", parents=[common], argument_default=argparse.SUPPRESS,
                       help="time-domain impedance oracle")
    p.add_argument("--soc", type=float, nargs="+")
    p.add_argument("--freq", type=float, nargs="+", help="frequencies [Hz]; default the configured grid")
    _grid_flags(p)
    p.add_argument("--mode", **model_mode)
    p.add_argument("--amplitude", type=float, help="current amplitude [A]")
    p.add_argument("--periods", type=int)
    p.add_argument("--discard", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("simulate", parents=[common], argument_default=argparse.SUPPRESS,
                       help="terminal voltage under a current profile")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--profile", type=Path, help="t_s, i_a samples (zero-order hold)")
    source.add_argument("--protocol", choices=["rest-discharge-charge"])
    p.add_argument("--current", type=float, default=5.0, help="protocol current [A]")
    p.add_argument("--soc", type=float, nargs=1, help="initial state of charge [%%]")
    p.add_argument("--dt", type=float, default=10.0, help="output sampling period [s]")
    p.add_argument("--mode", **model_mode)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("fit", parents=[common], argument_default=argparse.SUPPRESS,
                       help="multistart particle swarm estimation")
    p.add_argument("--mode", dest="fit_mode", choices=["impedance", "voltage"])
    p.add_argument("--model", dest="model_mode", choices=["spme", "spm"])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--soc", type=float, nargs=1, help="initial SOC for voltage fits [%%]")
    p.add_argument("--runs", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--swarm", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("sweep", parents=[common], argument_default=argparse.SUPPRESS,
                       help="spectra with one parameter scaled over [0.5, 2]")
    p.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--soc", type=float, nargs=1)
    _grid_flags(p)
    p.add_argument("--mode", **model_mode)

    p = sub.add_parser("validate", parents=[common], argument_default=argparse.SUPPRESS,
                       help="parse a raw EIS file and report SNLDR")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--snldr-threshold", type=float)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_impedance(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    dataset = spectrum(ctx.dae(), ctx.config.socs, ctx.config.grid(), ctx.dispatcher)
    for s in dataset:
        try:
            logger.info("soc=%g: arc diameter %.4g mOhm", s.soc, 1e3 * semicircle_diameter(s))
        except ArcNotResolvedError as exc:
            logger.info("soc=%g: %s", s.soc, exc)
    path = ctx.out_dir / "impedance.csv"
    write_impedance_dataset(dataset, path, bode=getattr(args, "bode", False), metadata=CURRENT_EXCITATION)
    return [path]


def _cmd_bruteforce(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    cfg = ctx.config
    grid = FrequencyGrid(np.sort(np.asarray(args.freq))) if getattr(args, "freq", None) else cfg.grid()
    dae = ctx.dae()
    protocol = dict(amplitude=cfg.amplitude, n_periods=cfg.n_periods, n_discard=cfg.n_discard, tol=cfg.tol)
    spectra = []
    for soc in cfg.socs:
        brute = brute_force_spectrum(dae, soc, grid, ctx.dispatcher, **protocol)
        reference = spectrum_at_soc(dae, grid, soc)
        rel = np.abs(brute.z - reference.z) / np.abs(reference.z)
        logger.info("soc=%g: max relative difference to the frequency-domain solve %.3g%%", soc, 100 * rel.max())
        spectra.append(brute)
    path = ctx.out_dir / "bruteforce.csv"
    write_impedance_dataset(ImpedanceDataset(spectra), path,
                            metadata={**CURRENT_EXCITATION, "i_amplitude_a": cfg.amplitude})
    return [path]


def _cmd_simulate(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    if getattr(args, "profile", None) is not None:
        profile = read_profile(args.profile)
    else:
        profile = rest_discharge_charge_protocol(args.current)
    dae = ctx.dae()
    soc = ctx.config.socs[0]
    x0 = np.asarray(equilibrium_state(dae, soc), dtype=float)
    traj = integrate(dae, x0, profile, sample_times(profile, args.dt), ctx.config.tol,
                     store_states=False, reinitialize=True)
    logger.info("Simulated %g s from soc=%g: %d steps", profile.duration, soc, traj.stats.n_steps)
    path = ctx.out_dir / "trajectory.csv"
    write_trajectory(traj, path)
    return [path]


def _cmd_fit(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    cfg = ctx.config
    if cfg.fit_mode == "impedance":
        target = parse_impedance_dataset(args.data)
    else:
        t, _, v = read_trajectory(args.data)
        if v is None:
            raise DatasetFormatError(args.data, 0, "voltage fits need a v_v column")
        target = VoltageTarget(read_profile(args.data), t - t[0], v, cfg.socs[0])
    problem = FitProblem(
        target=target,
        fixed=ctx.params,
        curves=ctx.curves,
        mesh=ctx.mesh,
        mode=cfg.mode,
        free=tuple(cfg.free) if cfg.free else None,
        bounds=cfg.bounds,
        tol=cfg.tol,
    )
    result = multistart(
        problem,
        n_runs=cfg.runs,
        swarm_size=cfg.swarm_size,
        max_iter=cfg.max_iter,
        seed=cfg.seed,
        dispatcher=ctx.dispatcher,
    )
    if result.fitting_errors:
        for soc, fe in result.fitting_errors.items():
            logger.info("soc=%g: fitting error %.3g%%", soc, fe)
    fit_path = ctx.out_dir / "fit.json"
    param_path = ctx.out_dir / "fitted_parameters.txt"
    result.save(fit_path)
    write_parameter_file(result.params, param_path)
    return [fit_path, param_path]


def _cmd_sweep(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    points = sensitivity_sweep(
        ctx.params, ctx.curves, ctx.mesh, args.param, args.steps, ctx.config.socs[0],
        grid=ctx.config.grid(), mode=ctx.config.mode, dispatcher=ctx.dispatcher,
    )
    lines = ["# factor, value, f_hz, re_ohm, im_ohm"]
    for pt in points:
        for f, z in zip(pt.spectrum.f_hz.tolist(), pt.spectrum.z.tolist()):
            lines.append(f"{pt.factor!r}, {float(pt.value)!r}, {f!r}, {z.real!r}, {z.imag!r}")
    path = ctx.out_dir / f"sweep_{args.param}.csv"
    atomic_write_text(path, "\n".join(lines) + "\n")
    return [path]


def _cmd_validate(args: argparse.Namespace, ctx: RunContext) -> list[Path]:
    records = parse_raw_eis(args.data)
    dataset = records_to_dataset(records)
    print(f"{args.data}: {len(dataset)} operating point(s), {dataset.n_points} impedance values")
    for entry in snldr_report(records, getattr(args, "snldr_threshold", None)):
        if not entry.available:
            print(f"soc={entry.soc:g}: SNLDR unavailable (no harmonic magnitudes)")
            continue
        flag = "  BELOW THRESHOLD" if entry.flagged else ""
        print(f"soc={entry.soc:g}: SNLDR {entry.value:.4g} at {entry.f_hz:g} Hz{flag}")
    path = ctx.out_dir / "dataset.csv"
    write_impedance_dataset(dataset, path, metadata=HYBRID_EIS_EXCITATION)
    return [path]


COMMANDS: dict[str, Callable[[argparse.Namespace, RunContext], list[Path]]] = {
    "impedance": _cmd_impedance,
    "bruteforce": _cmd_bruteforce,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _context(args: argparse.Namespace, settings: Settings) -> RunContext:
    overrides = {field: getattr(args, dest) for dest, field in _OVERRIDES.items() if hasattr(args, dest)}
    config = load_run_config(getattr(args, "config", None), overrides)
    params = read_parameter_file(config.parameter_file) if config.parameter_file else reference_grouped()
    curves = (
        read_ocp_file(config.ocp_pos_file, "positive") if config.ocp_pos_file else synthetic_positive_ocp(),
        read_ocp_file(config.ocp_neg_file, "negative") if config.ocp_neg_file else synthetic_negative_ocp(),
    )
    workers = getattr(args, "workers", None) or settings.workers
    return RunContext(
        config=config,
        params=params,
        curves=curves,
        mesh=config.mesh(),
        dispatcher=JobDispatcher(workers=workers, executor=settings.executor),
        out_dir=Path(config.output_dir or settings.output_dir),
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    settings = Settings()
    logging.basicConfig(level=getattr(args, "log_level", None) or settings.log_level, format=LOG_FORMAT)
    try:
        ctx = _context(args, settings)
        logger.info("=== [%s] config %s ===", args.command.upper(), ctx.config.digest()[:12])
        outputs = COMMANDS[args.command](args, ctx)
        write_manifest(ctx.out_dir, args.command, ctx.config.digest(), ctx.config.seed, outputs)
    except SpmeError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 3
    return 0
