"""
SVG figures from run outputs.

    python3 plot_results.py results/fig1b_s15/*/diagnostics.csv --out fig1b_s15.svg
    python3 plot_results.py results/run/density_snapshots.csv --kind density --out density.svg
    python3 plot_results.py results/run/particles.csv --kind particles --potential results/run/potential.csv --out particles.svg
"""

import os
import argparse
import logging

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from diagnostics import (
    exponential_fit_window,
    fit_exponential_rate,
    fit_rate_constant,
    theoretical_rate_curve,
)
from exceptions import CSVParseError, SVGFError
from experiment_config import load_config
from utils import collect_csv_paths, read_checked_csv, read_diagnostics_csv, read_grid_csv, read_particles_csv, setup_logging

logger = logging.getLogger(__name__)

STYLES = ("auto", "loglog", "semilog")

# fixed ids and no timestamp, so the same input gives the same svg bytes
matplotlib.rcParams["svg.hashsalt"] = "svgf"
SVG_METADATA = {"Date": None}


def load_run(csv_path):
    '''Diagnostics rows plus the config echoed next to them (None if there is no config.echo)'''
    rows = read_diagnostics_csv(csv_path)
    echo_path = os.path.join(os.path.dirname(os.path.abspath(csv_path)), "config.echo")
    config = load_config(echo_path) if os.path.exists(echo_path) else None
    return rows, config


def theoretical_curve(rows, config):
    '''
    Dotted overlay for a measured l2_error trajectory.

    s > 1: sqrt of (H0^(-a) + t/C)^(-1/a), a = (s-1)/gamma_star, with C fitted to
    the squared error. s = 1: exp of the semi-log line fitted before the decay stalls.
    '''
    t = np.array([row.t for row in rows])
    error = np.array([row.l2_error for row in rows])
    if config.s > 1:
        squared = error ** 2
        C = fit_rate_constant(t, squared, squared[0], config.gamma_star, config.s)
        return t, np.sqrt(theoretical_rate_curve(squared[0], config.gamma_star, config.s, C, t))
    fit = fit_exponential_rate(rows, exponential_fit_window(rows, "l2_error"), column="l2_error")
    return t, np.exp(fit.intercept + fit.slope * t)


def _resolve_style(style, configs):
    if style != "auto":
        return style
    known = [c for c in configs if c is not None]
    if known and all(c.s == 1 for c in known):
        return "semilog"
    return "loglog"


def _run_label(config, csv_path):
    if config is None:
        return os.path.basename(os.path.dirname(os.path.abspath(csv_path)))
    return f"γ* = {config.gamma_star:g}, s = {config.s:g}"


def build_error_figure(runs, style="auto"):
    '''
    runs: list of (csv_path, rows, config). One solid measured curve per run,
    each with a dotted theoretical curve in the same colour. With several runs
    only the measured curves enter the legend.
    '''
    if style not in STYLES:
        raise ValueError(f"style must be one of {STYLES}, got {style!r}")
    style = _resolve_style(style, [config for _, _, config in runs])

    fig, ax = plt.subplots(figsize=(6, 4.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    single = len(runs) == 1

    for i, (csv_path, rows, config) in enumerate(runs):
        color = colors[i % len(colors)]
        t = np.array([row.t for row in rows])
        error = np.array([row.l2_error for row in rows])
        # t = 0 cannot be drawn on log axes
        shown = t > 0 if style == "loglog" else np.ones_like(t, dtype=bool)
        ax.plot(t[shown], error[shown], "-", color=color,
                label="measured" if single else _run_label(config, csv_path))

        if config is None:
            logger.warning(f"no config.echo next to {csv_path}; skipping the theoretical curve")
            continue
        if config.mode == "particles":
            logger.info(f"{csv_path} is a particle run; no theoretical curve")
            continue
        try:
            t_theory, theory = theoretical_curve(rows, config)
        except SVGFError as e:
            logger.warning(f"no theoretical curve for {csv_path}: {e}")
            continue
        shown = t_theory > 0 if style == "loglog" else np.ones_like(t_theory, dtype=bool)
        ax.plot(t_theory[shown], theory[shown], ":", color=color,
                label="theoretical rate" if single else "_nolegend_")

    if style == "loglog":
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|\rho_t - \pi\|_{L^2}$")
    if single:
        ax.set_title(_run_label(runs[0][2], runs[0][0]))
    ax.legend()
    fig.tight_layout()
    return fig


def _save(fig, out_path):
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
    fig.savefig(out_path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"wrote {out_path}")


def emit_plots(csv_paths, out_path, style="auto"):
    '''
    Render the l2_error trajectories of one or more diagnostics.csv files into
    a single SVG. Every csv is parsed before anything is written, so a
    malformed or empty input leaves no output file behind.
    '''
    csv_paths = collect_csv_paths(csv_paths, file_pattern="diagnostics.csv")
    if not csv_paths:
        raise FileNotFoundError("no diagnostics csv files given")
    runs = []
    for csv_path in csv_paths:
        rows, config = load_run(csv_path)
        runs.append((csv_path, rows, config))
    _save(build_error_figure(runs, style), out_path)
    return out_path


def plot_density_evolution(snapshots_csv, out_path):
    '''Density profiles from density_snapshots.csv, one line per snapshot time'''
    header = pd.read_csv(snapshots_csv, nrows=0).columns.tolist()
    if not header or header[0] != "x":
        raise CSVParseError(snapshots_csv, 1, "first column must be x")
    frame = read_checked_csv(snapshots_csv, header)

    fig, ax = plt.subplots(figsize=(6, 4))
    cmap = plt.get_cmap("viridis")
    times = header[1:]
    for i, column in enumerate(times):
        ax.plot(frame["x"], frame[column], color=cmap(i / max(len(times) - 1, 1)), label=column)
    ax.set_xlabel("x")
    ax.set_ylabel(r"$\rho_t(x)$")
    ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def plot_particles(particles_csv, potential_csv, out_path):
    '''Potential as a heat map on [0,1)^2 with the particle positions on top'''
    V = read_grid_csv(potential_csv, dim=2)
    positions = read_particles_csv(particles_csv, dim=2)

    fig, ax = plt.subplots(figsize=(5, 5))
    # V.values[i, j] is V(x0 = i/n, x1 = j/n): x0 runs along the horizontal axis
    image = ax.imshow(V.values.T, origin="lower", extent=(0, 1, 0, 1), cmap="coolwarm")
    ax.scatter(positions[:, 0], positions[:, 1], s=2, color="black")
    fig.colorbar(image, ax=ax, label="V")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("$x_0$")
    ax.set_ylabel("$x_1$")
    fig.tight_layout()
    _save(fig, out_path)
    return out_path


def parse_args():
    parser = argparse.ArgumentParser()
    parser.add_argument("csv", nargs="+", help="diagnostics.csv files (or directories / glob patterns). ex: results/fig1b_s15/*/diagnostics.csv")
    parser.add_argument("--out", required=True, help="Path of the svg to write.")
    parser.add_argument("--kind", required=False, default="error", choices=["error", "density", "particles"],
                        help="error: L2 error curves, density: density_snapshots.csv, particles: particles.csv over the potential.")
    parser.add_argument("--style", required=False, default="auto", choices=list(STYLES), help="Axis scaling for error plots.")
    parser.add_argument("--potential", required=False, help="potential.csv to draw under the particles (--kind particles).")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser.parse_args()


def main():
    args = parse_args()
    setup_logging(args.verbose)

    if args.kind == "error":
        emit_plots(args.csv, args.out, args.style)
    elif args.kind == "density":
        plot_density_evolution(args.csv[0], args.out)
    else:
        if args.potential is None:
            raise SystemExit("--potential is required for --kind particles")
        plot_particles(args.csv[0], args.potential, args.out)


if __name__ == "__main__":
    main()
