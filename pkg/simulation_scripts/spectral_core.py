"""
Discrete Fourier analysis on the unit torus [0,1)^d.

Grid fields are sampled at x_j = j/N (cell j is centred on x_j and has width
1/N). Spectra use the normalisation

    f_hat_k = (1/N^d) sum_j f(x_j) exp(-2 pi i k.x_j)

so that f_hat_0 is the grid mean of f. Coefficient tables are stored in numpy
FFT ordering; for even N the slot -N/2 holds the (self-conjugate) Nyquist mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from exceptions import ConfigurationError, InputError

MAX_DIM = 3


def is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def integer_frequencies(n):
    '''Signed integer frequencies of an FFT axis of length n (Nyquist stored as -n/2)'''
    k = np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64)
    k.setflags(write=False)
    return k


@lru_cache(maxsize=32)
def _wavevector_mesh(n, dim):
    k = integer_frequencies(n)
    mesh = np.meshgrid(*([k] * dim), indexing="ij")
    for axis in mesh:
        axis.setflags(write=False)
    return tuple(mesh)


@lru_cache(maxsize=32)
def _wavenumber_modulus(n, dim):
    '''|2 pi k| on the frequency mesh'''
    mesh = _wavevector_mesh(n, dim)
    modulus = 2.0 * np.pi * np.sqrt(sum(k.astype(np.float64) ** 2 for k in mesh))
    modulus.setflags(write=False)
    return modulus


@dataclass(frozen=True, eq=False)
class GridField:
    '''Real samples of a periodic function on the uniform grid x_j = j/N of [0,1)^d'''

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim < 1 or values.ndim > MAX_DIM:
            raise InputError(f"grid fields must have 1 to {MAX_DIM} axes, got {values.ndim}")
        if len(set(values.shape)) != 1:
            raise InputError(f"grid must have the same cell count on every axis, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InputError("grid field contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self):
        return self.values.ndim

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dx(self):
        return 1.0 / self.n

    def mean(self):
        return float(np.mean(self.values))

    def cell_centers(self):
        return np.arange(self.n) / self.n

    def coordinates(self):
        '''Meshgrid of cell centres, one array per axis'''
        x = self.cell_centers()
        return tuple(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @classmethod
    def from_function(cls, func, n, dim=1):
        x = np.arange(n) / n
        mesh = np.meshgrid(*([x] * dim), indexing="ij")
        return cls(func(*mesh))

    @classmethod
    def constant(cls, value, n, dim=1):
        return cls(np.full((n,) * dim, float(value)))

    def __add__(self, other):
        return GridField(self.values + _values_of(other))

    def __sub__(self, other):
        return GridField(self.values - _values_of(other))

    def __mul__(self, other):
        return GridField(self.values * _values_of(other))

    __rmul__ = __mul__


def _values_of(other):
    return other.values if isinstance(other, GridField) else other


@dataclass(frozen=True, eq=False)
class Spectrum:
    '''Complex Fourier coefficients in FFT ordering, shape (n,)*dim'''

    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=np.complex128)
        if coefficients.ndim < 1 or coefficients.ndim > MAX_DIM or len(set(coefficients.shape)) != 1:
            raise InputError(f"invalid coefficient table shape {coefficients.shape}")
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def dim(self):
        return self.coefficients.ndim

    @property
    def n(self):
        return self.coefficients.shape[0]

    @property
    def cutoff(self):
        '''Largest |k_i| representable on each axis'''
        return self.n // 2

    def wavevectors(self):
        return _wavevector_mesh(self.n, self.dim)

    def modulus(self):
        return _wavenumber_modulus(self.n, self.dim)

    def mean(self):
        return float(self.coefficients[(0,) * self.dim].real)

    def _with(self, coefficients):
        return Spectrum(coefficients)


def to_spectrum(f: GridField) -> Spectrum:
    if not is_power_of_two(f.n):
        raise ConfigurationError(f"grid_n must be a power of two, got {f.n}")
    return Spectrum(np.fft.fftn(f.values) / f.values.size)


def from_spectrum(F: Spectrum) -> GridField:
    return GridField(np.fft.ifftn(F.coefficients * F.coefficients.size).real)


def apply_multiplier(F: Spectrum, beta: float) -> Spectrum:
    '''Homogeneous multiplier D^beta: |2 pi k|^beta at k != 0, zero at k = 0'''
    modulus = F.modulus()
    symbol = np.zeros_like(modulus)
    nonzero = modulus > 0
    symbol[nonzero] = modulus[nonzero] ** beta
    return F._with(F.coefficients * symbol)


def riesz_convolve(F: Spectrum, s: float) -> Spectrum:
    '''Convolution with the Riesz kernel K_s, i.e. D^(-2s)'''
    if s < 1:
        raise InputError(f"Riesz kernel order must satisfy s >= 1, got {s}")
    return apply_multiplier(F, -2.0 * s)


def _nyquist_free(k, n):
    if n % 2 == 0:
        return np.where(k == -n // 2, 0, k)
    return k


def spectral_gradient(F: Spectrum) -> tuple[Spectrum, ...]:
    '''Component j multiplies by 2 pi i k_j; Nyquist rows along axis j are zeroed'''
    return tuple(
        F._with(F.coefficients * (2j * np.pi * _nyquist_free(k, F.n)))
        for k in F.wavevectors()
    )


def spectral_divergence(components) -> Spectrum:
    components = tuple(components)
    first = components[0]
    if len(components) != first.dim:
        raise InputError(f"divergence needs {first.dim} components, got {len(components)}")
    total = np.zeros_like(first.coefficients)
    for F, k in zip(components, first.wavevectors()):
        total = total + F.coefficients * (2j * np.pi * _nyquist_free(k, F.n))
    return first._with(total)


def sobolev_norm(F: Spectrum, beta: float, homogeneous: bool = True) -> float:
    power = np.abs(F.coefficients) ** 2
    modulus = F.modulus()
    if homogeneous:
        nonzero = modulus > 0
        return float(np.sqrt(np.sum(modulus[nonzero] ** (2.0 * beta) * power[nonzero])))
    return float(np.sqrt(np.sum((1.0 + modulus ** 2) ** beta * power)))


def _embed(F: Spectrum, K: int):
    '''Place the coefficients of F on a centred table covering [-K, K]^d'''
    table = np.zeros((2 * K + 1,) * F.dim, dtype=np.complex128)
    index = tuple(k + K for k in F.wavevectors())
    table[index] = F.coefficients
    return table


def truncated_l2_distance(A: Spectrum, B: Spectrum, M: int) -> float:
    if A.dim != B.dim:
        raise InputError(f"spectra have different dimensions ({A.dim} vs {B.dim})")
    if M < 0 or M > A.cutoff or M > B.cutoff:
        raise InputError(f"mode cutoff M={M} exceeds the spectra cutoffs ({A.cutoff}, {B.cutoff})")
    K = max(A.cutoff, B.cutoff)
    diff = _embed(A, K) - _embed(B, K)
    centred = np.arange(-K, K + 1)
    mesh = np.meshgrid(*([centred] * A.dim), indexing="ij")
    inside = np.max(np.abs(np.stack(mesh)), axis=0) <= M
    return float(np.sqrt(np.sum(np.abs(diff[inside]) ** 2)))


def resample_spectrum(F: Spectrum, n: int) -> Spectrum:
    '''Zero-pad (or truncate) F onto an FFT table of length n per axis'''
    K = max(F.cutoff, n // 2)
    table = _embed(F, K)
    k = integer_frequencies(n)
    index = tuple(np.meshgrid(*([k + K] * F.dim), indexing="ij"))
    return Spectrum(table[index])


def dealias(F: Spectrum) -> Spectrum:
    '''2/3-rule truncation: zero every mode with some |k_i| > N/3'''
    limit = F.n / 3.0
    keep = np.ones(F.coefficients.shape, dtype=bool)
    for k in F.wavevectors():
        keep &= np.abs(k) <= limit
    return F._with(np.where(keep, F.coefficients, 0))


def grid_product(a: GridField, b: GridField, dealiased: bool = False) -> GridField:
    '''Pointwise product formed on the physical grid'''
    if dealiased:
        a = from_spectrum(dealias(to_spectrum(a)))
        b = from_spectrum(dealias(to_spectrum(b)))
    return GridField(a.values * b.values)


def gradient_field(f: GridField) -> tuple[GridField, ...]:
    return tuple(from_spectrum(G) for G in spectral_gradient(to_spectrum(f)))


def l2_norm(f: GridField) -> float:
    '''L2 norm on the unit torus, by grid quadrature'''
    return float(np.sqrt(np.mean(f.values ** 2)))
