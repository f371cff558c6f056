"""
Fully discrete SVGD on the torus with the compactly supported kernel

    K(x) = (1 - 4|x|)_+^(d+2),

whose Fourier coefficients decay like |k|^-(d+1), i.e. like a Riesz kernel of
order s = (d+1)/2. Each iteration moves every particle by

    x_i <- x_i + eta * phi_i,   phi_i = -(1/N) sum_j [ K(x_i - x_j) grad V(x_j) + grad K(x_i - x_j) ]

with displacements taken in the min-image convention.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from diagnostics import DiagnosticsRow, SimulationResult, fit_power_law
from exceptions import InputError, SolverAbort
from random_fields import PotentialSeries, PotentialSpec, sample_potential, target_from_potential
from spectral_core import (
    GridField,
    Spectrum,
    from_spectrum,
    integer_frequencies,
    resample_spectrum,
    to_spectrum,
    truncated_l2_distance,
)

logger = logging.getLogger(__name__)

SUPPORT_RADIUS = 0.25
FORCE_BLOCK = 256


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    iteration: int = 0
    step_size: float = 0.05

    def __post_init__(self):
        positions = np.array(self.positions, dtype=np.float64)
        if positions.ndim == 1:
            positions = positions[:, None]
        if positions.shape[0] < 1:
            raise InputError("an ensemble needs at least one particle")
        if np.any(positions < 0) or np.any(positions >= 1):
            raise InputError("particle coordinates must lie in [0, 1)")
        if self.step_size <= 0:
            raise InputError(f"step size must be positive, got {self.step_size}")
        self.positions = positions

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def size(self):
        return self.positions.shape[0]

    @classmethod
    def lattice(cls, side, dim, step_size=0.05, offset=0.0):
        axis = (np.arange(side) + offset) / side
        mesh = np.meshgrid(*([axis] * dim), indexing="ij")
        return cls(np.stack([m.ravel() for m in mesh], axis=1), step_size=step_size)

    @classmethod
    def uniform(cls, n, dim, rng, step_size=0.05):
        return cls(rng.random((n, dim)), step_size=step_size)


def wrap_points(x):
    '''Map coordinates into [0, 1)'''
    wrapped = np.mod(x, 1.0)
    # mod can round up to exactly 1.0 for tiny negative inputs
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


def wrap_displacement(x, y):
    '''Min-image displacement x - y, each component in [-1/2, 1/2)'''
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return d - np.floor(d + 0.5)


def askey_kernel(r):
    '''(1 - 4|r|)_+^(d+2) for displacements r of shape (..., d)'''
    r = np.asarray(r, dtype=np.float64)
    dim = r.shape[-1]
    base = np.maximum(1.0 - 4.0 * np.linalg.norm(r, axis=-1), 0.0)
    return base ** (dim + 2)


def askey_kernel_grad(r):
    '''-4(d+2)(1 - 4|r|)_+^(d+1) r/|r|, set to 0 at r = 0'''
    r = np.asarray(r, dtype=np.float64)
    dim = r.shape[-1]
    norm = np.linalg.norm(r, axis=-1)
    base = np.maximum(1.0 - 4.0 * norm, 0.0)
    scale = np.zeros_like(norm)
    inside = (norm > 0) & (base > 0)
    scale[inside] = -4.0 * (dim + 2) * base[inside] ** (dim + 1) / norm[inside]
    return scale[..., None] * r


@dataclass(frozen=True)
class AskeyKernel:
    dim: int
    support_radius: float = SUPPORT_RADIUS

    @property
    def exponent(self):
        return self.dim + 2

    @property
    def equivalent_riesz_order(self):
        return (self.dim + 1) / 2.0

    def __call__(self, r):
        return askey_kernel(r)

    def gradient(self, r):
        return askey_kernel_grad(r)


def _interaction_block(targets, sources, grad_V_sources, kernel):
    r = wrap_displacement(targets[:, None, :], sources[None, :, :])
    return kernel(r) @ grad_V_sources + kernel.gradient(r).sum(axis=1)


def interaction_sum_naive(positions, grad_V_values, kernel):
    '''sum_j [K(x_i - x_j) grad V(x_j) + grad K(x_i - x_j)] over all pairs, in row blocks'''
    out = np.empty_like(positions)
    for start in range(0, positions.shape[0], FORCE_BLOCK):
        stop = start + FORCE_BLOCK
        out[start:stop] = _interaction_block(positions[start:stop], positions, grad_V_values, kernel)
    return out


def cell_assignment(positions, n_cells):
    cells = np.minimum((positions * n_cells).astype(np.int64), n_cells - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (n_cells,) * positions.shape[1])
    return flat


def interaction_sum_cell_list(positions, grad_V_values, kernel):
    '''
    Same sum restricted to neighbouring cells. Cells have width at least the
    kernel support radius, so all interacting pairs sit in adjacent cells.
    '''
    dim = positions.shape[1]
    n_cells = max(1, int(np.floor(1.0 / kernel.support_radius)))
    flat = cell_assignment(positions, n_cells)
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(n_cells ** dim + 1))
    members = [order[bounds[c]:bounds[c + 1]] for c in range(n_cells ** dim)]

    out = np.zeros_like(positions)
    offsets = list(itertools.product((-1, 0, 1), repeat=dim))
    for cell in itertools.product(range(n_cells), repeat=dim):
        flat_cell = np.ravel_multi_index(cell, (n_cells,) * dim)
        targets = members[flat_cell]
        if len(targets) == 0:
            continue
        neighbours = sorted({
            np.ravel_multi_index(tuple((c + o) % n_cells for c, o in zip(cell, offset)), (n_cells,) * dim)
            for offset in offsets
        })
        sources = np.concatenate([members[c] for c in neighbours])
        out[targets] = _interaction_block(positions[targets], positions[sources], grad_V_values[sources], kernel)
    return out


def svgd_direction(ensemble: ParticleEnsemble, grad_V_at, kernel, use_cell_list=True):
    grad_V_values = np.asarray(grad_V_at(ensemble.positions), dtype=np.float64)
    if not np.all(np.isfinite(grad_V_values)):
        raise SolverAbort(f"grad V is not finite at iteration {ensemble.iteration}")
    interaction = interaction_sum_cell_list if use_cell_list else interaction_sum_naive
    return -interaction(ensemble.positions, grad_V_values, kernel) / ensemble.size


def svgd_step(ensemble: ParticleEnsemble, grad_V_at, kernel, use_cell_list=True) -> ParticleEnsemble:
    phi = svgd_direction(ensemble, grad_V_at, kernel, use_cell_list)
    moved = wrap_points(ensemble.positions + ensemble.step_size * phi)
    return ParticleEnsemble(moved, iteration=ensemble.iteration + 1, step_size=ensemble.step_size)


def empirical_spectrum(ensemble: ParticleEnsemble, M: int) -> Spectrum:
    '''rho_hat_k = (1/N) sum_j exp(-2 pi i k.x_j) for |k|_inf <= M, stored on a (2M+1)^d FFT table'''
    if M < 1:
        raise InputError(f"mode cutoff must be at least 1, got {M}")
    k = integer_frequencies(2 * M + 1)
    tables = [np.exp(-2j * np.pi * np.outer(ensemble.positions[:, a], k)) for a in range(ensemble.dim)]
    axes = "abc"[: ensemble.dim]
    signature = ",".join(f"p{a}" for a in axes) + "->" + axes
    coefficients = np.einsum(signature, *tables, optimize=True) / ensemble.size
    return Spectrum(coefficients)


def truncated_density(F: Spectrum, n: int) -> GridField:
    '''Grid values of the Fourier truncation carried by F'''
    return from_spectrum(resample_spectrum(F, n))


def askey_kernel_spectrum(dim: int, n: int):
    '''(|k|, K_hat_k) for the kernel sampled on an n^d grid; K_hat is real since K is even'''
    x = np.arange(n) / n
    r = x - np.floor(x + 0.5)
    mesh = np.meshgrid(*([r] * dim), indexing="ij")
    K = GridField(askey_kernel(np.stack(mesh, axis=-1)))
    spectrum = to_spectrum(K)
    k_norm = spectrum.modulus() / (2.0 * np.pi)
    return k_norm, spectrum.coefficients.real


def kernel_spectrum_check(dim: int, resolution: int, band=(1.0 / 64.0, 1.0 / 8.0)):
    '''
    Slope of log K_hat against log|k| over the mid band |k| in [band[0] N, band[1] N].
    Returns the RateFit (slope, intercept, R^2, window in |k|) and the smallest
    coefficient in the band.
    '''
    k_norm, coefficients = askey_kernel_spectrum(dim, resolution)
    k_lo, k_hi = band[0] * resolution, band[1] * resolution
    inside = (k_norm >= k_lo) & (k_norm <= k_hi)
    band_coefficients = coefficients[inside]
    smallest = float(np.min(band_coefficients))
    if smallest <= 0:
        logger.warning(f"non-positive kernel coefficient {smallest:.3e} in the fitted band")
        band_coefficients = np.abs(band_coefficients)
    fit = fit_power_law(k_norm[inside], band_coefficients, (k_lo, k_hi))
    return fit, smallest


def _initial_ensemble(config, rng):
    if config.particle_init == "lattice":
        side = round(config.particles_n ** (1.0 / config.dim))
        return ParticleEnsemble.lattice(side, config.dim, config.step_size)
    return ParticleEnsemble.uniform(config.particles_n, config.dim, rng, config.step_size)


def _particle_row(ensemble, target_band, M, grid_n):
    empirical = empirical_spectrum(ensemble, M)
    density = truncated_density(empirical, min(grid_n, 4 * M))
    return DiagnosticsRow(
        t=ensemble.iteration * ensemble.step_size,
        entropy=None,
        l2_error=truncated_l2_distance(empirical, target_band, M),
        ksd=None,
        mass=empirical.mean(),
        min_density=float(np.min(density.values)),
        max_density=float(np.max(density.values)),
        dt=ensemble.step_size,
    )


def run_particles(config, V: GridField | None = None) -> SimulationResult:
    '''
    Iterate svgd_step config.max_iterations times from a uniform (random or
    lattice) ensemble, recording the truncated L2 error every
    config.sample_every_iterations iterations.
    '''
    if V is None:
        V = sample_potential(PotentialSpec(
            gamma_star=config.gamma_star, amplitude=config.amplitude, seed=config.seed,
            dim=config.dim, n=config.grid_n,
        ))
    pi = target_from_potential(V)
    target_spectrum = to_spectrum(pi)
    series = PotentialSeries(V)
    kernel = AskeyKernel(config.dim)
    # particle positions draw from a stream independent of the potential's
    rng = np.random.default_rng([config.seed, 1])
    ensemble = _initial_ensemble(config, rng)

    cutoffs = [config.fourier_cutoff]
    if config.secondary_cutoff and config.secondary_cutoff != config.fourier_cutoff:
        cutoffs.append(config.secondary_cutoff)
    # the target restricted to |k|_inf <= M, so each sample compares two small tables
    target_bands = {M: resample_spectrum(target_spectrum, 2 * M + 1) for M in cutoffs}
    history = {M: [_particle_row(ensemble, target_bands[M], M, config.grid_n)] for M in cutoffs}

    for _ in range(config.max_iterations):
        ensemble = svgd_step(ensemble, series.gradient_at, kernel, config.use_cell_list)
        if ensemble.iteration % config.sample_every_iterations == 0 or ensemble.iteration == config.max_iterations:
            for M in cutoffs:
                history[M].append(_particle_row(ensemble, target_bands[M], M, config.grid_n))
            logger.debug(f"iteration {ensemble.iteration}: L2 error (M={cutoffs[0]}) {history[cutoffs[0]][-1].l2_error:.4e}")

    logger.info(
        f"particle run finished after {ensemble.iteration} iterations, "
        f"L2 error {history[cutoffs[0]][0].l2_error:.3e} -> {history[cutoffs[0]][-1].l2_error:.3e}"
    )
    result = SimulationResult(rows=history[cutoffs[0]], positions=ensemble.positions.copy())
    result.secondary_rows = {M: history[M] for M in cutoffs[1:]}
    return result
