import numpy as np
import pytest

from spectral_core import GridField, from_spectrum, integer_frequencies, Spectrum


def band_limited_field(rng, n, dim=1, max_mode=4, amplitude=1.0, zero_mean=True):
    '''Random real field whose Fourier coefficients vanish outside |k|_inf <= max_mode'''
    k = integer_frequencies(n)
    mesh = np.meshgrid(*([k] * dim), indexing="ij")
    inside = np.max(np.abs(np.stack(mesh)), axis=0) <= max_mode
    coefficients = np.where(inside, rng.standard_normal((n,) * dim) + 1j * rng.standard_normal((n,) * dim), 0)
    if zero_mean:
        coefficients[(0,) * dim] = 0
    values = from_spectrum(Spectrum(coefficients)).values
    return GridField(amplitude * values / np.max(np.abs(values)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def config_text(**values):
    return "".join(f"{key}={value}\n" for key, value in values.items())


@pytest.fixture
def meanfield_text():
    return config_text(mode="meanfield", grid_n=2048, s=2, gamma_star=1.5, seed=7, t_end=50)
