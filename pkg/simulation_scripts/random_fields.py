"""
Random potentials of prescribed Sobolev regularity and the targets they define.

V is synthesised by filtering white noise in Fourier space, so the coefficients
are complex Gaussian, Hermitian and independent up to that symmetry, with

    E|V_hat_k|^2 = amplitude^2 (1 + |2 pi k|^2)^(-gamma_star - d/2),   V_hat_0 = 0.

The expected H^gamma mass is then finite exactly for gamma < gamma_star.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from exceptions import ConfigurationError, InputError
from spectral_core import (
    GridField,
    Spectrum,
    from_spectrum,
    integer_frequencies,
    is_power_of_two,
    spectral_gradient,
    to_spectrum,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PotentialSpec:
    gamma_star: float
    amplitude: float = 1.0
    seed: int = 0
    dim: int = 1
    n: int = 2048

    def __post_init__(self):
        if self.gamma_star <= self.dim / 2:
            raise ConfigurationError(f"gamma_star must exceed d/2 = {self.dim / 2}, got {self.gamma_star}")
        if self.amplitude <= 0:
            raise ConfigurationError(f"amplitude must be positive, got {self.amplitude}")
        if not is_power_of_two(self.n):
            raise ConfigurationError(f"grid_n must be a power of two, got {self.n}")

    def standard_deviation(self, modulus):
        '''Per-mode standard deviation as a function of |2 pi k|'''
        return self.amplitude * (1.0 + modulus ** 2) ** (-(2.0 * self.gamma_star + self.dim) / 4.0)


def sample_potential(spec: PotentialSpec) -> GridField:
    rng = np.random.default_rng(spec.seed)
    noise = GridField(rng.standard_normal((spec.n,) * spec.dim))

    # white noise has E|w_hat_k|^2 = 1/N^d; rescale to unit variance per mode
    white = to_spectrum(noise)
    modulus = white.modulus()
    filtered = white.coefficients * spec.standard_deviation(modulus) * np.sqrt(spec.n ** spec.dim)
    filtered[(0,) * spec.dim] = 0.0

    V = from_spectrum(Spectrum(filtered))
    logger.debug(f"sampled potential gamma_star={spec.gamma_star} amplitude={spec.amplitude} seed={spec.seed} on {spec.n}^{spec.dim}")
    # the mean is zero up to rounding of the inverse transform
    return GridField(V.values - V.mean())


def target_from_potential(V: GridField) -> GridField:
    '''pi = exp(-V)/Z with Z the grid mean of exp(-V)'''
    # shifting by min V leaves pi unchanged and keeps exp(-V) <= 1
    shifted = V.values - np.min(V.values)
    with np.errstate(under="ignore"):
        weights = np.exp(-shifted)
    Z = np.mean(weights)
    pi = weights / Z
    if not np.all(np.isfinite(pi)) or np.min(pi) <= 0:
        raise InputError(
            f"exp(-V) under/overflows (osc V = {np.ptp(V.values):.3g}); reduce the potential amplitude"
        )
    return GridField(pi)


def normalization_constant(V: GridField) -> float:
    '''Z = grid mean of exp(-V)'''
    with np.errstate(over="raise"):
        try:
            return float(np.mean(np.exp(-V.values)))
        except FloatingPointError as e:
            raise InputError(f"exp(-V) overflows: {e}") from e


def grad_potential(V: GridField) -> tuple[GridField, ...]:
    return tuple(from_spectrum(G) for G in spectral_gradient(to_spectrum(V)))


class PotentialSeries:
    '''
    Exact evaluation of a band-limited potential's Fourier series at arbitrary
    points of the torus. The Nyquist modes are dropped from the gradient so the
    result is real, matching spectral_gradient on the grid.
    '''

    def __init__(self, V: GridField):
        self.dim = V.dim
        self.spectrum = to_spectrum(V)
        self.k = integer_frequencies(V.n)
        grads = spectral_gradient(self.spectrum)
        self.gradient_coefficients = [G.coefficients for G in grads]
        # einsum signature contracting one exponential table per axis
        axes = "abc"[: self.dim]
        self._signature = (
            axes + "," + ",".join(f"p{a}" for a in axes) + "->p"
        )

    def _exponentials(self, points):
        points = np.atleast_2d(points)
        return [np.exp(2j * np.pi * np.outer(points[:, a], self.k)) for a in range(self.dim)]

    def _evaluate(self, coefficients, tables):
        return np.einsum(self._signature, coefficients, *tables, optimize=True).real

    def value_at(self, points):
        tables = self._exponentials(points)
        return self._evaluate(self.spectrum.coefficients, tables)

    def gradient_at(self, points):
        '''Array of shape (P, d) with grad V at each point'''
        tables = self._exponentials(points)
        return np.stack([self._evaluate(c, tables) for c in self.gradient_coefficients], axis=1)
