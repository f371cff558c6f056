"""
Mean-field Stein variational gradient flow on the torus,

    d/dt rho + div(rho v) = 0,    v = -grad D^(-2s)(rho - pi) - D^(-2s)((rho - pi) grad V),

discretised with a spectral velocity and a first-order upwind finite-volume
update (dimension by dimension in 2D/3D) under an adaptive CFL step.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from diagnostics import (
    DiagnosticsRow,
    SimulationResult,
    ksd,
    lojasiewicz_ratio,
    relative_entropy,
)
from exceptions import CFLViolation, ConfigurationError, SolverAbort, StateCorruptionError
from random_fields import PotentialSpec, grad_potential, sample_potential, target_from_potential
from spectral_core import (
    GridField,
    Spectrum,
    from_spectrum,
    grid_product,
    l2_norm,
    riesz_convolve,
    sobolev_norm,
    spectral_gradient,
    to_spectrum,
)

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-10
POSITIVITY_TOLERANCE = 1e-13
ENTROPY_TOLERANCE = 1e-8
BOUND_TOLERANCE = 1e-10
ENTROPY_FLOOR = 1e-15
MAX_STEP_HALVINGS = 30


@dataclass
class StepPolicy:
    cfl_number: float = 0.4
    dt_max: float = 0.01
    t_end: float = 1.0
    sample_every: float = 0.1

    def __post_init__(self):
        if not 0 < self.cfl_number < 1:
            raise ConfigurationError(f"cfl_number must lie in (0, 1), got {self.cfl_number}")
        if self.dt_max <= 0:
            raise ConfigurationError(f"dt_max must be positive, got {self.dt_max}")
        if self.sample_every <= 0:
            raise ConfigurationError(f"sample_every must be positive, got {self.sample_every}")


@dataclass
class SolverState:
    rho: GridField
    pi: GridField
    grad_V: tuple
    s: float
    t: float = 0.0
    step_count: int = 0

    def check(self):
        mass = self.rho.mean()
        if abs(mass - 1.0) > MASS_TOLERANCE:
            raise StateCorruptionError(f"density mass drifted to {mass!r} at t={self.t}")


def velocity_field(rho: GridField, pi: GridField, grad_V, s: float, dealiased: bool = False) -> tuple[GridField, ...]:
    '''Expanded form -grad D^(-2s) sigma - D^(-2s)(sigma grad V); no division by pi'''
    mismatch = abs(rho.mean() - pi.mean())
    if mismatch > MASS_TOLERANCE:
        raise StateCorruptionError(f"mean(rho) and mean(pi) differ by {mismatch:.3e}")
    sigma = rho - pi
    smoothed = riesz_convolve(to_spectrum(sigma), s)
    velocity = []
    for grad_component, dV in zip(spectral_gradient(smoothed), grad_V):
        drift = riesz_convolve(to_spectrum(grid_product(sigma, dV, dealiased)), s)
        velocity.append(from_spectrum(Spectrum(-grad_component.coefficients - drift.coefficients)))
    return tuple(velocity)


def velocity_field_weighted_form(rho: GridField, pi: GridField, s: float) -> tuple[GridField, ...]:
    '''Compact form -D^(-2s)(pi grad(sigma/pi)); divides by pi, kept as a cross-check'''
    ratio = to_spectrum(GridField((rho.values - pi.values) / pi.values))
    return tuple(
        from_spectrum(Spectrum(-riesz_convolve(to_spectrum(grid_product(pi, from_spectrum(G))), s).coefficients))
        for G in spectral_gradient(ratio)
    )


def cfl_timestep(v, dx: float, policy: StepPolicy) -> float:
    speed = max(float(np.max(np.abs(component.values))) for component in v)
    if speed == 0.0:
        return policy.dt_max
    return min(policy.dt_max, policy.cfl_number * dx / speed)


def _upwind_sweep(rho, v, dt, dx, axis):
    v_face = 0.5 * (v + np.roll(v, -1, axis=axis))
    outflow = np.maximum(v_face, 0.0)
    inflow = np.minimum(v_face, 0.0)
    # coefficient of rho_i in the update must stay non-negative
    courant = dt / dx * np.max(outflow - np.roll(inflow, 1, axis=axis))
    if courant > 1.0:
        raise CFLViolation(float(courant))
    flux = outflow * rho + inflow * np.roll(rho, -1, axis=axis)
    return rho - dt / dx * (flux - np.roll(flux, 1, axis=axis))


def _upwind_values(rho: GridField, v, dt: float, strang: bool = False) -> np.ndarray:
    values = rho.values
    axes = list(range(rho.dim))
    if strang and len(axes) > 1:
        sweeps = [(a, dt / 2) for a in axes[:-1]] + [(axes[-1], dt)] + [(a, dt / 2) for a in reversed(axes[:-1])]
    else:
        sweeps = [(a, dt) for a in axes]
    for axis, step in sweeps:
        values = _upwind_sweep(values, v[axis].values, step, rho.dx, axis)
    return values


def upwind_step(rho: GridField, v, dt: float, strang: bool = False) -> GridField:
    '''
    Conservative donor-cell update. Interface velocities are averages of the
    adjacent cell values; axes are swept one after the other (optionally in
    Strang order).
    '''
    return GridField(_upwind_values(rho, v, dt, strang))


def linearized_evolution(sigma0: Spectrum, s: float, t: float) -> Spectrum:
    '''sigma_hat_k(t) = sigma_hat_k(0) exp(-|2 pi k|^(2-2s) t); the mean stays zero'''
    modulus = sigma0.modulus()
    damping = np.zeros_like(modulus)
    nonzero = modulus > 0
    damping[nonzero] = np.exp(-(modulus[nonzero] ** (2.0 - 2.0 * s)) * t)
    return Spectrum(sigma0.coefficients * damping)


def max_principle_bound(pi: GridField, grad_V, H0: float) -> float:
    '''
    Frozen upper bound M for s = 1 runs. At a maximum point of rho,
    d/dt rho <= -rho (rho - max pi - |div D^-2 (sigma grad V)|), and
    |div D^-2 (sigma grad V)| <= c (max rho + max pi)^(1/2) with
    c = ||grad V||_inf (sum_{k != 0} |2 pi k|^-2)^(1/2) (2 H0)^(1/4),
    using ||sigma||_2^2 <= ||sigma||_inf ||sigma||_1 and Pinsker. M is the
    root of m - max pi - c (m + max pi)^(1/2).
    '''
    modulus = to_spectrum(pi).modulus()
    inverse_laplacian_mass = np.sum(modulus[modulus > 0] ** -2.0)
    grad_sup = float(np.max(np.sqrt(sum(g.values ** 2 for g in grad_V))))
    c = grad_sup * np.sqrt(inverse_laplacian_mass) * (2.0 * max(H0, 0.0)) ** 0.25
    pi_max = float(np.max(pi.values))
    u = 0.5 * (c + np.sqrt(c ** 2 + 8.0 * pi_max))
    return float(u ** 2 - pi_max)


def single_mode_perturbation(n: int, gamma: float, mode_index: int, dim: int = 1) -> GridField:
    '''sqrt(2) (2 pi n)^(-gamma) cos(2 pi n x_1), unit H^gamma norm'''
    scale = np.sqrt(2.0) * (2.0 * np.pi * mode_index) ** (-gamma)
    return GridField.from_function(lambda x, *rest: scale * np.cos(2.0 * np.pi * mode_index * x), n, dim)


def build_problem(config, V: GridField | None = None):
    '''Potential, target, grad V and initial density for a mean-field config'''
    if V is None:
        spec = PotentialSpec(
            gamma_star=config.gamma_star, amplitude=config.amplitude, seed=config.seed,
            dim=config.dim, n=config.grid_n,
        )
        V = sample_potential(spec)
    pi = target_from_potential(V)
    grad_V = grad_potential(V)
    if config.init == "perturbed":
        rho0 = pi + config.epsilon * single_mode_perturbation(config.grid_n, config.gamma_star, config.mode_index, config.dim)
    else:
        rho0 = GridField.constant(1.0, config.grid_n, config.dim)
    return V, pi, grad_V, rho0


def _dump_state(output_dir, state, values):
    if output_dir is None:
        return None
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "abort_dump.npz")
    np.savez(path, rho=state.rho.values, attempted=values, t=state.t, step_count=state.step_count)
    return path


def _sample(state: SolverState, dt: float, dealiased: bool) -> DiagnosticsRow:
    rho = state.rho
    return DiagnosticsRow(
        t=state.t,
        entropy=relative_entropy(rho, state.pi),
        l2_error=l2_norm(rho - state.pi),
        ksd=ksd(rho, state.pi, state.s, state.grad_V, dealiased),
        mass=rho.mean(),
        min_density=float(np.min(rho.values)),
        max_density=float(np.max(rho.values)),
        dt=dt,
    )


def _norms(state: SolverState, gamma: float) -> dict:
    sigma = to_spectrum(state.rho - state.pi)
    record = {
        "t": state.t,
        "hdot_gamma": sobolev_norm(sigma, gamma),
        "hdot_one_minus_s": sobolev_norm(sigma, 1.0 - state.s),
    }
    if state.s > 1:
        record["lojasiewicz"] = lojasiewicz_ratio(state.rho, state.pi, state.s, gamma, state.grad_V)
    return record


def _check_sample(row: DiagnosticsRow, previous, bound, pi_range, violations):
    found = []
    if abs(row.mass - 1.0) > 1e-12:
        found.append(f"t={row.t:.6g}: mass deviates from 1 by {row.mass - 1.0:.3e}")
    if row.min_density < -POSITIVITY_TOLERANCE:
        found.append(f"t={row.t:.6g}: negative density {row.min_density:.3e}")
    if previous is not None and row.entropy > previous.entropy + ENTROPY_TOLERANCE:
        found.append(f"t={row.t:.6g}: entropy increased by {row.entropy - previous.entropy:.3e}")
    if bound is not None and row.max_density > bound:
        found.append(f"t={row.t:.6g}: max density {row.max_density:.6g} exceeds maximum-principle bound {bound:.6g}")
    pi_min, pi_max = pi_range
    l2_squared = row.l2_error ** 2
    upper = l2_squared / pi_min
    lower = l2_squared / (2.0 * max(row.max_density, pi_max))
    if row.entropy > upper * (1.0 + BOUND_TOLERANCE) + ENTROPY_FLOOR:
        found.append(f"t={row.t:.6g}: entropy {row.entropy:.6e} exceeds ||rho-pi||^2/min pi = {upper:.6e}")
    if row.entropy < lower * (1.0 - BOUND_TOLERANCE) - ENTROPY_FLOOR:
        found.append(f"t={row.t:.6g}: entropy {row.entropy:.6e} below ||rho-pi||^2/(2 max) = {lower:.6e}")
    for message in found:
        logger.warning(message)
    violations.extend(found)


def run_meanfield(config, V: GridField | None = None, rho0: GridField | None = None, output_dir=None) -> SimulationResult:
    '''
    Integrate the flow up to config.t_end, sampling diagnostics every
    config.sample_every. Steps are clipped so that sample times are hit exactly.
    '''
    V, pi, grad_V, default_rho0 = build_problem(config, V)
    rho = rho0 if rho0 is not None else default_rho0
    policy = StepPolicy(cfl_number=config.cfl_number, dt_max=config.dt_max, t_end=config.t_end, sample_every=config.sample_every)
    state = SolverState(rho=rho, pi=pi, grad_V=grad_V, s=config.s)
    state.check()

    result = SimulationResult(rows=[])
    H0 = relative_entropy(rho, pi)
    bound = None
    if config.s == 1:
        M = max_principle_bound(pi, grad_V, H0)
        bound = max(M, float(np.max(rho.values)))
        result.max_principle_bound = bound
        logger.info(f"maximum-principle bound frozen at {bound:.6g} (M = {M:.6g})")

    row = _sample(state, 0.0, config.dealias)
    result.rows.append(row)
    result.norms.append(_norms(state, config.gamma_star))
    pi_range = (float(np.min(pi.values)), float(np.max(pi.values)))
    _check_sample(row, None, bound, pi_range, result.violations)
    if config.snapshot_every > 0:
        result.snapshots[0.0] = rho.values.copy()

    snapshot_index = 1
    n_samples = int(np.floor(policy.t_end / policy.sample_every + 1e-9))
    sample_times = [k * policy.sample_every for k in range(1, n_samples + 1)]
    if not sample_times or sample_times[-1] < policy.t_end - 1e-12:
        sample_times.append(policy.t_end)
    target_index = 0

    while target_index < len(sample_times):
        target = sample_times[target_index]
        v = velocity_field(state.rho, pi, grad_V, state.s, config.dealias)
        dt = min(cfl_timestep(v, state.rho.dx, policy), target - state.t)
        lands_on_sample = dt >= target - state.t

        for _ in range(MAX_STEP_HALVINGS):
            try:
                values = _upwind_values(state.rho, v, dt, config.strang_splitting)
                break
            except CFLViolation as e:
                logger.debug(f"t={state.t:.6g}: {e}; halving dt={dt:.3e}")
                dt *= 0.5
                lands_on_sample = False
        else:
            raise SolverAbort(f"could not find an admissible step at t={state.t}")

        if not np.all(np.isfinite(values)):
            path = _dump_state(output_dir, state, values)
            raise SolverAbort(f"density became non-finite at t={state.t}, step {state.step_count}", path)

        state.rho = GridField(values)
        state.t = target if lands_on_sample else state.t + dt
        state.step_count += 1

        if lands_on_sample:
            target_index += 1
            row = _sample(state, dt, config.dealias)
            _check_sample(row, result.rows[-1], bound, pi_range, result.violations)
            result.rows.append(row)
            result.norms.append(_norms(state, config.gamma_star))
            logger.debug(f"t={row.t:.4f} H={row.entropy:.6e} L2={row.l2_error:.6e} I={row.ksd:.6e} dt={dt:.3e}")
            if config.snapshot_every > 0 and state.t >= snapshot_index * config.snapshot_every - 1e-9:
                result.snapshots[state.t] = state.rho.values.copy()
                snapshot_index += 1

    logger.info(
        f"mean-field run finished: t={state.t:g} after {state.step_count} steps, "
        f"H={result.rows[-1].entropy:.3e}, L2 error={result.rows[-1].l2_error:.3e}"
    )
    return result
