"""
Lyapunov quantities of the mean-field flow and decay-rate fitting.

    relative entropy   H(rho|pi) = int rho log(rho/pi)
    Stein discrepancy  I_s(rho|pi) = || grad sigma + sigma grad V ||^2_{H^-s},  sigma = rho - pi

I_s is the entropy dissipation rate, dH/dt = -I_s, and is evaluated through
the spectral identity rather than the double integral over the Riesz kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from exceptions import DomainError, FitError, InputError
from spectral_core import (
    GridField,
    from_spectrum,
    grid_product,
    l2_norm,
    sobolev_norm,
    spectral_gradient,
    to_spectrum,
)

logger = logging.getLogger(__name__)

DIAGNOSTICS_COLUMNS = ["t", "entropy", "l2_error", "ksd", "mass", "min_density", "max_density", "dt"]
RATES_COLUMNS = ["run_id", "s", "gamma_star", "slope", "expected_slope", "r_squared", "window_lo", "window_hi"]

MIN_FIT_SAMPLES = 8
ZERO_DENSITY = 1e-300


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    entropy: Optional[float]
    l2_error: float
    ksd: Optional[float]
    mass: float
    min_density: Optional[float]
    max_density: Optional[float]
    dt: float

    def __post_init__(self):
        for name in DIAGNOSTICS_COLUMNS:
            value = getattr(self, name)
            if value is not None and not np.isfinite(value):
                raise InputError(f"diagnostics field {name} is not finite at t={self.t}")
        if self.entropy is not None and self.entropy < -1e-12:
            raise InputError(f"negative relative entropy {self.entropy} at t={self.t}")
        if self.ksd is not None and self.ksd < 0:
            raise InputError(f"negative Stein discrepancy {self.ksd} at t={self.t}")
        if self.l2_error < 0:
            raise InputError(f"negative L2 error at t={self.t}")

    def as_dict(self):
        return {name: getattr(self, name) for name in DIAGNOSTICS_COLUMNS}


@dataclass(frozen=True)
class RateFit:
    window: tuple
    slope: float
    intercept: float
    r_squared: float

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise FitError(f"empty fit window {self.window}")
        if not 0.0 <= self.r_squared <= 1.0:
            raise FitError(f"R^2 outside [0, 1]: {self.r_squared}")


@dataclass
class SimulationResult:
    '''Everything a run produces besides the files the runner writes from it'''

    rows: list
    norms: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    max_principle_bound: Optional[float] = None
    secondary_rows: dict = field(default_factory=dict)
    positions: Optional[np.ndarray] = None


def _check_target(pi: GridField):
    if np.min(pi.values) <= 0:
        raise InputError("target density must be positive everywhere")


def relative_entropy(rho: GridField, pi: GridField) -> float:
    '''
    H(rho|pi) as the mean of pi ((1+u) log(1+u) - u) with u = rho/pi - 1.
    Equal to the mean of rho log(rho/pi) when both have unit mass, but every
    term is nonnegative and O(u^2), so mass rounding does not leave a floor.
    '''
    _check_target(pi)
    r = rho.values
    p = pi.values
    integrand = p.copy()
    positive = r > ZERO_DENSITY
    u = r[positive] / p[positive] - 1.0
    integrand[positive] = p[positive] * ((1.0 + u) * np.log1p(u) - u)
    return float(np.mean(integrand))


def entropy_l2_bounds(rho: GridField, pi: GridField):
    '''
    Two-sided comparison of H(rho|pi) with ||rho - pi||^2:
    lower = ||rho-pi||^2 / (2 max(max rho, max pi)), upper = ||rho-pi||^2 / min pi.
    '''
    _check_target(pi)
    l2_squared = l2_norm(rho - pi) ** 2
    upper_density = max(np.max(rho.values), np.max(pi.values))
    return l2_squared / (2.0 * upper_density), l2_squared / np.min(pi.values)


def log_target_gradient(pi: GridField) -> tuple[GridField, ...]:
    '''grad V recovered from pi, since V = -log pi up to a constant'''
    _check_target(pi)
    return tuple(from_spectrum(G) for G in spectral_gradient(to_spectrum(GridField(-np.log(pi.values)))))


def stein_flux(rho: GridField, pi: GridField, grad_V=None, dealiased=False) -> tuple[GridField, ...]:
    '''w = grad sigma + sigma grad V, which equals pi grad(sigma/pi)'''
    if grad_V is None:
        grad_V = log_target_gradient(pi)
    sigma = rho - pi
    grad_sigma = [from_spectrum(G) for G in spectral_gradient(to_spectrum(sigma))]
    return tuple(g + grid_product(sigma, dV, dealiased) for g, dV in zip(grad_sigma, grad_V))


def ksd(rho: GridField, pi: GridField, s: float, grad_V=None, dealiased=False) -> float:
    _check_target(pi)
    if s < 1:
        raise InputError(f"s must be >= 1, got {s}")
    total = 0.0
    for w in stein_flux(rho, pi, grad_V, dealiased):
        # the mean of w is dropped: the Riesz symbol vanishes at k = 0
        total += sobolev_norm(to_spectrum(w), -s, homogeneous=True) ** 2
    return total


def lojasiewicz_ratio(rho: GridField, pi: GridField, s: float, gamma: float, grad_V=None) -> float:
    '''I_s / (H^(1+(s-1)/gamma) * ||sigma||_{H^gamma}^(-2(s-1)/gamma)), bounded below along s > 1 flows'''
    if s <= 1:
        raise DomainError("the Lojasiewicz ratio is defined for s > 1")
    entropy = relative_entropy(rho, pi)
    high_norm = sobolev_norm(to_spectrum(rho - pi), gamma)
    if entropy <= 0 or high_norm <= 0:
        return float("nan")
    exponent = (s - 1.0) / gamma
    return ksd(rho, pi, s, grad_V) / (entropy ** (1.0 + exponent) * high_norm ** (-2.0 * exponent))


def theoretical_rate_curve(H0, gamma, s, C, t):
    '''(H0^(-(s-1)/gamma) + t/C)^(-gamma/(s-1))'''
    if s <= 1:
        raise DomainError("polynomial rate curve needs s > 1; use the exponential form for s = 1")
    if gamma <= 0 or C <= 0 or H0 <= 0:
        raise DomainError(f"rate curve needs gamma, C, H0 > 0 (got {gamma}, {C}, {H0})")
    a = (s - 1.0) / gamma
    return (H0 ** (-a) + np.asarray(t, dtype=np.float64) / C) ** (-1.0 / a)


def _column(rows, column):
    t = np.array([row.t for row in rows], dtype=np.float64)
    raw = [getattr(row, column) for row in rows]
    if any(v is None for v in raw):
        raise FitError(f"column {column} has empty entries")
    return t, np.array(raw, dtype=np.float64)


def _select_window(t, values, window):
    t_lo, t_hi = window
    inside = (t >= t_lo) & (t <= t_hi)
    if np.count_nonzero(inside) < MIN_FIT_SAMPLES:
        raise FitError(f"window [{t_lo}, {t_hi}] holds {np.count_nonzero(inside)} samples, need {MIN_FIT_SAMPLES}")
    values = values[inside]
    if np.any(values <= 0):
        raise FitError(f"non-positive values in window [{t_lo}, {t_hi}]")
    return t[inside], values


def _fit_line(x, y, window):
    model = LinearRegression().fit(x.reshape(-1, 1), y)
    r2 = float(np.clip(r2_score(y, model.predict(x.reshape(-1, 1))), 0.0, 1.0))
    return RateFit(window=tuple(window), slope=float(model.coef_[0]), intercept=float(model.intercept_), r_squared=r2)


def fit_power_law(x, values, window) -> RateFit:
    '''Least squares line through (log x, log value) for the samples with x in window'''
    x, values = _select_window(np.asarray(x, dtype=np.float64), np.asarray(values, dtype=np.float64), window)
    if np.any(x <= 0):
        raise FitError("log-log fit needs positive abscissae throughout the window")
    return _fit_line(np.log(x), np.log(values), window)


def fit_decay_exponent(rows, window, column="l2_error") -> RateFit:
    return fit_power_law(*_column(rows, column), window)


def fit_exponential_rate(rows, window, column="entropy") -> RateFit:
    '''Least squares line through (t, log value); the slope is -alpha'''
    t, values = _select_window(*_column(rows, column), window)
    return _fit_line(t, np.log(values), window)


def default_fit_window(rows, column="l2_error", drop=10.0):
    '''From the first sample where the value fell by `drop` from its initial value up to the last sample'''
    t, values = _column(rows, column)
    below = np.nonzero(values <= values[0] / drop)[0]
    if len(below) and t[-1] - t[below[0]] > 0 and len(t) - below[0] >= MIN_FIT_SAMPLES:
        return float(t[below[0]]), float(t[-1])
    logger.warning(f"{column} never dropped {drop:g}x from {values[0]:.3g}; fitting over the last 80% of the run")
    return float(t[-1] / 5.0), float(t[-1])


def tail_fit_window(rows, column="l2_error", decades=1.0):
    '''The last `decades` decades of time, [t_end 10^-decades, t_end], for log-log tail fits'''
    t, _ = _column(rows, column)
    if len(t) == 0 or t[-1] <= 0:
        raise FitError("tail window needs samples at positive times")
    return float(t[-1] * 10.0 ** -decades), float(t[-1])


def exponential_fit_window(rows, column="entropy", drop=10.0, stall=0.5):
    '''
    Semi-log window that starts like default_fit_window and ends where the decay stalls:
    the last sample before the log-decay rate, averaged over as many samples as the first
    `drop`-fold decrease inside the window took, falls under `stall` times that first rate.
    Grid-scale modes decay slowly and show up as such a stall once the rest has gone.
    '''
    lo, hi = default_fit_window(rows, column, drop)
    t, values = _column(rows, column)
    start = int(np.searchsorted(t, lo))
    positive = values > 0
    if not positive[start]:
        return lo, hi
    later = np.nonzero(values[start:] <= values[start] / drop)[0]
    if not len(later):
        return lo, hi
    first = start + int(later[0])
    reference = (np.log(values[start]) - np.log(values[first])) / (t[first] - t[start])
    span = max(first - start, 1)
    end = len(t) - 1
    for i in range(first + 1, len(t)):
        if not positive[i]:
            end = i - 1
            break
        rate = (np.log(values[i - span]) - np.log(values[i])) / (t[i] - t[i - span])
        if rate < stall * reference:
            end = i - span
            break
    end = max(end, first)
    if end - start + 1 < MIN_FIT_SAMPLES:
        return lo, hi
    if end < len(t) - 1:
        logger.info(f"{column} decay stalls at t={t[end + 1]:.4g}; semi-log window ends at t={t[end]:.4g}")
    return lo, float(t[end])


def fit_rate_constant(t, values, H0, gamma, s):
    '''
    Closed-form least squares for C in values ~ theoretical_rate_curve(H0, gamma, s, C, t):
    values^(-a) - H0^(-a) = t / C with a = (s-1)/gamma, fitted through the origin.
    '''
    if s <= 1:
        raise DomainError("rate constant only defined for s > 1")
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = (t > 0) & (values > 0)
    if not np.any(keep):
        raise FitError("no positive samples to fit the rate constant")
    a = (s - 1.0) / gamma
    z = values[keep] ** (-a) - H0 ** (-a)
    inverse_C = np.dot(t[keep], z) / np.dot(t[keep], t[keep])
    if inverse_C <= 0:
        raise FitError("fitted rate constant is not positive; the values do not decay")
    return 1.0 / inverse_C


def dissipation_residual(rows, transient=0.05, floor=1e-13):
    '''
    Median over interior samples of |dH/dt + I_s| / I_s, with dH/dt from centred
    differences. Samples in the first `transient` fraction of the run and samples
    where I_s is below `floor` are excluded.
    '''
    t, entropy = _column(rows, "entropy")
    _, dissipation = _column(rows, "ksd")
    dH = (entropy[2:] - entropy[:-2]) / (t[2:] - t[:-2])
    I = dissipation[1:-1]
    keep = (t[1:-1] >= transient * t[-1]) & (I > floor)
    if not np.any(keep):
        raise FitError("no samples left to check the dissipation identity")
    return float(np.median(np.abs(dH[keep] + I[keep]) / I[keep]))


def entropy_increases(rows, tolerance=1e-8):
    '''Index pairs (i-1, i) where the entropy grew by more than tolerance'''
    entropies = [row.entropy for row in rows]
    return [(i - 1, i) for i in range(1, len(entropies)) if entropies[i] > entropies[i - 1] + tolerance]
