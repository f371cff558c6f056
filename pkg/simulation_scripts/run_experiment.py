"""
Command line entry point.

    python3 run_experiment.py run configs/fig1b_s20/gamma_1.5.cfg
    python3 run_experiment.py sweep configs/fig1b_s20
    python3 run_experiment.py plot results/fig1b_s20/*/diagnostics.csv --out fig1b_s20.svg
    python3 run_experiment.py check [--all]

Exit status: 0 when the run finished and every monitored invariant held,
1 when an invariant was violated, 2 on any error raised by the scripts.
"""

import os
import glob
import argparse
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np
import pandas as pd

from diagnostics import (
    DiagnosticsRow,
    default_fit_window,
    dissipation_residual,
    entropy_increases,
    exponential_fit_window,
    fit_decay_exponent,
    fit_exponential_rate,
    ksd,
    relative_entropy,
    tail_fit_window,
)
from exceptions import ConfigurationError, SVGFError
from experiment_config import echo_config, load_config, replace_config
from meanfield_solver import linearized_evolution, run_meanfield, single_mode_perturbation
from particle_svgd import askey_kernel_spectrum, kernel_spectrum_check, run_particles
from plot_results import emit_plots
from random_fields import PotentialSpec, sample_potential
from spectral_core import GridField, from_spectrum, l2_norm, to_spectrum
from utils import (
    read_grid_csv,
    read_rates_csv,
    setup_logging,
    write_diagnostics_csv,
    write_frame_csv,
    write_grid_csv,
    write_particles_csv,
    write_rates_csv,
    write_table_csv,
    write_text,
)

logger = logging.getLogger(__name__)

CONFIG_SUFFIX = ".cfg"
THREADS_VARIABLE = "SVGF_THREADS"
DISSIPATION_TOLERANCE = 0.05
TESTS_DIR = Path(__file__).resolve().parent.parent / "tests"


def _potential(config):
    if config.potential_file is not None:
        logger.info(f"reading potential from {config.potential_file}")
        V = read_grid_csv(config.potential_file, config.dim)
        if V.n != config.grid_n:
            raise ConfigurationError(f"potential_file: holds a {V.n}^{V.dim} grid, config has grid_n={config.grid_n}")
        return V
    return sample_potential(PotentialSpec(
        gamma_star=config.gamma_star, amplitude=config.amplitude, seed=config.seed,
        dim=config.dim, n=config.grid_n,
    ))


def _fit_window(config, rows, column, choose_window=default_fit_window):
    if config.fit_window_lo is not None and config.fit_window_hi is not None:
        return config.fit_window_lo, config.fit_window_hi
    return choose_window(rows, column)


def _rate_record(config, fit=None, expected=None):
    return {
        "run_id": config.resolved_run_id,
        "s": config.s,
        "gamma_star": config.gamma_star,
        "slope": None if fit is None else fit.slope,
        "expected_slope": expected,
        "r_squared": None if fit is None else fit.r_squared,
        "window_lo": None if fit is None else fit.window[0],
        "window_hi": None if fit is None else fit.window[1],
    }


def _fitted_rate(config, rows, fitter, column, expected=None, choose_window=default_fit_window):
    '''A rates.csv record; a fit that cannot be made leaves the fitted fields empty'''
    try:
        fit = fitter(rows, _fit_window(config, rows, column, choose_window), column=column)
    except SVGFError as e:
        logger.warning(f"{config.resolved_run_id}: could not fit {column}: {e}")
        return _rate_record(config, expected=expected)
    logger.info(f"{config.resolved_run_id}: {column} slope {fit.slope:.4f} (expected {expected}), R^2 {fit.r_squared:.4f}")
    return _rate_record(config, fit, expected)


def _write_snapshots(result, grid_n, path):
    x = np.arange(grid_n) / grid_n
    frame = pd.DataFrame({"x": x})
    for t in sorted(result.snapshots):
        frame[f"t={t:.6g}"] = result.snapshots[t]
    write_frame_csv(frame, path)


def _run_meanfield(config, out):
    V = _potential(config)
    result = run_meanfield(config, V=V, output_dir=out)
    write_diagnostics_csv(result.rows, out / "diagnostics.csv")

    norm_columns = ["t", "hdot_gamma", "hdot_one_minus_s"] + (["lojasiewicz"] if config.s > 1 else [])
    write_table_csv(result.norms, norm_columns, out / "norms.csv")
    if config.export_potential:
        write_grid_csv(V, out / "potential.csv")
    if result.snapshots:
        if config.dim == 1:
            _write_snapshots(result, config.grid_n, out / "density_snapshots.csv")
        else:
            logger.info("density snapshots are only written for dim=1")

    if config.s > 1:
        rate = _fitted_rate(config, result.rows, fit_decay_exponent, "l2_error",
                            expected=-config.gamma_star / (2.0 * (config.s - 1.0)), choose_window=tail_fit_window)
    else:
        rate = _fitted_rate(config, result.rows, fit_exponential_rate, "entropy", choose_window=exponential_fit_window)
    write_rates_csv([rate], out / "rates.csv")

    try:
        residual = dissipation_residual(result.rows)
        log = logger.warning if residual > DISSIPATION_TOLERANCE else logger.info
        log(f"{config.resolved_run_id}: median dissipation residual {residual:.3%}")
    except SVGFError as e:
        logger.warning(f"{config.resolved_run_id}: dissipation check skipped: {e}")
    return result.violations


def _run_particles(config, out):
    V = _potential(config)
    result = run_particles(config, V=V)
    write_diagnostics_csv(result.rows, out / "diagnostics.csv")
    for M, rows in result.secondary_rows.items():
        write_diagnostics_csv(rows, out / f"diagnostics_cutoff_{M}.csv")
    write_particles_csv(result.positions, out / "particles.csv")
    if config.export_potential:
        write_grid_csv(V, out / "potential.csv")

    records = [_fitted_rate(config, result.rows, fit_decay_exponent, "l2_error")]
    for M, rows in result.secondary_rows.items():
        record = _fitted_rate(config, rows, fit_decay_exponent, "l2_error")
        record["run_id"] = f"{config.resolved_run_id}_cutoff_{M}"
        records.append(record)
    write_rates_csv(records, out / "rates.csv")
    return result.violations


def linearized_rows(config):
    '''
    Closed-form trajectory of rho = 1 + epsilon * single mode around the
    uniform target, sampled every config.sample_every up to config.t_end.
    '''
    pi = GridField.constant(1.0, config.grid_n, config.dim)
    grad_V = (GridField.constant(0.0, config.grid_n, config.dim),)
    sigma0 = to_spectrum(config.epsilon * single_mode_perturbation(config.grid_n, config.gamma_star, config.mode_index))
    n_samples = int(np.floor(config.t_end / config.sample_every + 1e-9))
    times = [k * config.sample_every for k in range(n_samples + 1)]
    if times[-1] < config.t_end - 1e-12:
        times.append(config.t_end)

    rows = []
    for i, t in enumerate(times):
        rho = pi + from_spectrum(linearized_evolution(sigma0, config.s, t))
        rows.append(DiagnosticsRow(
            t=t,
            entropy=relative_entropy(rho, pi),
            l2_error=l2_norm(rho - pi),
            ksd=ksd(rho, pi, config.s, grad_V),
            mass=rho.mean(),
            min_density=float(np.min(rho.values)),
            max_density=float(np.max(rho.values)),
            dt=t - times[i - 1] if i else 0.0,
        ))
    return rows


def _run_linearized(config, out):
    rows = linearized_rows(config)
    write_diagnostics_csv(rows, out / "diagnostics.csv")
    # a single mode n decays like exp(-|2 pi n|^(2-2s) t)
    expected = -(2.0 * np.pi * config.mode_index) ** (2.0 - 2.0 * config.s)
    rate = _fitted_rate(config, rows, fit_exponential_rate, "l2_error", expected=expected)
    write_rates_csv([rate], out / "rates.csv")
    return [f"entropy increased between samples {i} and {j}" for i, j in entropy_increases(rows)]


def _run_kernel_check(config, out):
    fit, smallest = kernel_spectrum_check(config.dim, config.grid_n)
    k_norm, coefficients = askey_kernel_spectrum(config.dim, config.grid_n)
    order = np.argsort(k_norm.ravel(), kind="stable")
    spectrum = pd.DataFrame({"k_norm": k_norm.ravel()[order], "coefficient": coefficients.ravel()[order]})
    write_frame_csv(spectrum[spectrum["k_norm"] > 0], out / "kernel_spectrum.csv")
    write_rates_csv([_rate_record(config, fit, expected=-(config.dim + 1.0))], out / "rates.csv")
    logger.info(f"kernel spectrum slope {fit.slope:.4f} (expected {-(config.dim + 1)}), R^2 {fit.r_squared:.4f}")
    if smallest <= 0:
        return [f"non-positive kernel coefficient {smallest:.3e} in the fitted band"]
    return []


RUNNERS = {
    "meanfield": _run_meanfield,
    "particles": _run_particles,
    "linearized": _run_linearized,
    "kernel_check": _run_kernel_check,
}


def run_experiment(config):
    '''
    Run one experiment and write its outputs (diagnostics.csv, rates.csv,
    config.echo and the mode-specific extras) into config.output_dir.
    Returns the list of invariant violations, empty when every check held.
    '''
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"run {config.resolved_run_id}: mode={config.mode}, output in {out}")
    write_text(echo_config(config), out / "config.echo")
    violations = RUNNERS[config.mode](config, out)
    if violations:
        logger.warning(f"run {config.resolved_run_id}: {len(violations)} invariant violation(s)")
    else:
        logger.info(f"run {config.resolved_run_id}: all invariants held")
    return violations


def thread_count():
    raw = os.environ.get(THREADS_VARIABLE, "1")
    try:
        count = int(raw)
    except ValueError:
        count = 0
    if count < 1:
        raise ConfigurationError(f"{THREADS_VARIABLE}: must be a positive integer, got {raw!r}")
    return count


def sweep_members(config_dir):
    '''Configs of a sweep directory, each redirected to its own output subdirectory'''
    paths = sorted(glob.glob(os.path.join(config_dir, f"*{CONFIG_SUFFIX}")))
    if not paths:
        raise ConfigurationError(f"config_dir: no *{CONFIG_SUFFIX} files in {config_dir}")
    members = []
    for path in paths:
        config = load_config(path)
        stem = Path(path).stem
        members.append(replace_config(config, output_dir=config.output_dir / stem, run_id=config.run_id or stem))
    outputs = [m.output_dir for m in members]
    if len(set(outputs)) != len(outputs):
        raise ConfigurationError("output_dir: sweep members would share an output directory")
    return members


def _run_member(config):
    return config.resolved_run_id, run_experiment(config)


def run_sweep(config_dir, workers=None):
    '''
    Run every member config concurrently, then gather the rates.csv files of
    the members that finished into one summary and draw their error curves
    into sweep.svg under the common parent directory. A member that raises is
    reported as a violation and left out of the summary.
    '''
    members = sweep_members(config_dir)
    workers = workers or thread_count()
    logger.info(f"sweep over {len(members)} configs in {config_dir} with {workers} worker(s)")
    outcomes = {}
    failed = {}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_run_member, member): member for member in members}
        for future in as_completed(futures):
            member = futures[future]
            try:
                run_id, violations = future.result()
            except Exception as e:
                logger.error(f"sweep member {member.resolved_run_id} failed: {e}")
                failed[member.resolved_run_id] = e
                continue
            outcomes[run_id] = violations

    finished = [m for m in members if m.resolved_run_id in outcomes]
    base = Path(os.path.commonpath([str(m.output_dir.parent) for m in members]))
    if finished:
        summary = pd.concat([read_rates_csv(m.output_dir / "rates.csv") for m in finished], ignore_index=True)
        write_rates_csv(summary.to_dict("records"), base / "rates.csv")
        plotted = [m.output_dir / "diagnostics.csv" for m in finished if m.mode != "kernel_check"]
        if plotted:
            emit_plots(plotted, base / "sweep.svg")
    else:
        logger.error(f"no member of the sweep in {config_dir} finished; no summary written")

    violations = [f"{run_id}: failed: {e}" for run_id, e in sorted(failed.items())]
    for run_id in sorted(outcomes):
        violations.extend(f"{run_id}: {v}" for v in outcomes[run_id])
    return violations


def run_checks(include_slow=False):
    import pytest

    args = [str(TESTS_DIR)]
    if not include_slow:
        args += ["-m", "not slow"]
    return int(pytest.main(args))


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Mean-field and particle SVGD experiments on the torus.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Log per-sample diagnostics and step rejections.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run a single experiment config.")
    run.add_argument("config", help="Path to a key=value config file. ex: configs/fig1b_s20/gamma_1.5.cfg")

    sweep = subparsers.add_parser("sweep", help="Run every *.cfg in a directory concurrently.")
    sweep.add_argument("config_dir", help=f"Directory of configs. Worker count comes from {THREADS_VARIABLE}.")

    plot = subparsers.add_parser("plot", help="Plot L2 error curves of one or more runs into one svg.")
    plot.add_argument("csv", nargs="+", help="diagnostics.csv files or run directories.")
    plot.add_argument("--out", required=True, help="Path of the svg to write.")
    plot.add_argument("--style", required=False, default="auto", choices=["auto", "loglog", "semilog"])

    check = subparsers.add_parser("check", help="Run the invariant test suite.")
    check.add_argument("--all", action="store_true", help="Include the slow acceptance runs.")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    setup_logging(args.verbose)

    try:
        if args.command == "run":
            logger.info(f"config: {args.config}")
            violations = run_experiment(load_config(args.config))
        elif args.command == "sweep":
            violations = run_sweep(args.config_dir)
        elif args.command == "plot":
            emit_plots(args.csv, args.out, args.style)
            violations = []
        else:
            return run_checks(args.all)
    except (SVGFError, OSError) as e:
        logger.error(str(e))
        return 2

    for violation in violations:
        logger.error(violation)
    return 1 if violations else 0


if __name__ == "__main__":
    raise SystemExit(main())
