import numpy as np
import pytest
from numpy.testing import assert_allclose

from exceptions import ConfigurationError, InputError
from random_fields import (
    PotentialSeries,
    PotentialSpec,
    grad_potential,
    normalization_constant,
    sample_potential,
    target_from_potential,
)
from spectral_core import GridField, to_spectrum


class TestPotentialSpec:

    def test_regularity_must_exceed_half_dimension(self):
        with pytest.raises(ConfigurationError, match="gamma_star"):
            PotentialSpec(gamma_star=0.5, dim=1)
        with pytest.raises(ConfigurationError, match="gamma_star"):
            PotentialSpec(gamma_star=1.0, dim=2, n=64)

    def test_grid_size(self):
        with pytest.raises(ConfigurationError, match="grid_n must be a power of two"):
            PotentialSpec(gamma_star=1.5, n=1000)

    def test_amplitude(self):
        with pytest.raises(ConfigurationError, match="amplitude"):
            PotentialSpec(gamma_star=1.5, amplitude=0.0)


class TestSamplePotential:

    def test_same_seed_same_field(self):
        spec = PotentialSpec(gamma_star=1.5, seed=11, n=256)
        assert np.array_equal(sample_potential(spec).values, sample_potential(spec).values)

    def test_different_seeds_differ(self):
        a = sample_potential(PotentialSpec(gamma_star=1.5, seed=1, n=256))
        b = sample_potential(PotentialSpec(gamma_star=1.5, seed=2, n=256))
        assert not np.allclose(a.values, b.values)

    def test_zero_mean(self):
        V = sample_potential(PotentialSpec(gamma_star=1.0, seed=3, n=512))
        assert abs(V.mean()) < 1e-15
        assert abs(to_spectrum(V).coefficients[0]) < 1e-15

    def test_mode_variance_matches_filter(self):
        spec = PotentialSpec(gamma_star=1.5, seed=5, n=2048)
        F = to_spectrum(sample_potential(spec))
        k = np.abs(np.fft.fftfreq(spec.n, d=1.0 / spec.n))
        band = (k >= 10) & (k <= 500)
        ratio = np.abs(F.coefficients[band]) ** 2 / spec.standard_deviation(F.modulus()[band]) ** 2
        assert np.mean(ratio) == pytest.approx(1.0, rel=0.2)

    @pytest.mark.parametrize("gamma_star", [1.0, 2.0])
    def test_ensemble_power_spectrum_slope(self, gamma_star):
        n = 2048
        power = np.zeros(n)
        for seed in range(100):
            F = to_spectrum(sample_potential(PotentialSpec(gamma_star=gamma_star, seed=seed, n=n)))
            power += np.abs(F.coefficients) ** 2 / 100
        k = np.arange(10, 1000)
        slope = np.polyfit(np.log(k), np.log(power[k]), 1)[0]
        assert slope == pytest.approx(-(2 * gamma_star + 1), rel=0.05)

    def test_amplitude_scales_field(self):
        a = sample_potential(PotentialSpec(gamma_star=1.5, amplitude=1.0, seed=4, n=128))
        b = sample_potential(PotentialSpec(gamma_star=1.5, amplitude=2.0, seed=4, n=128))
        assert_allclose(b.values, 2.0 * a.values, atol=1e-13)

    def test_two_dimensional(self):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=2, seed=0, n=32))
        assert V.values.shape == (32, 32)


class TestGradPotential:

    def test_matches_central_differences_to_second_order(self):
        errors = []
        for n in (64, 128):
            V = GridField.from_function(lambda x: 0.5 * np.sin(2 * np.pi * x) + 0.2 * np.cos(4 * np.pi * x), n)
            central = (np.roll(V.values, -1) - np.roll(V.values, 1)) * n / 2
            (gradient,) = grad_potential(V)
            errors.append(np.max(np.abs(gradient.values - central)))
        assert errors[0] < 0.05
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


class TestTargetFromPotential:

    def test_normalised_and_positive(self):
        V = sample_potential(PotentialSpec(gamma_star=1.5, amplitude=2.0, seed=8, n=1024))
        pi = target_from_potential(V)
        assert pi.mean() == pytest.approx(1.0, abs=1e-12)
        assert np.min(pi.values) > 0

    def test_proportional_to_boltzmann_weight(self):
        V = GridField.from_function(lambda x: 0.7 * np.sin(2 * np.pi * x), 64)
        pi = target_from_potential(V)
        assert_allclose(pi.values * normalization_constant(V), np.exp(-V.values), rtol=1e-13)

    def test_flat_potential(self):
        pi = target_from_potential(GridField.constant(0.0, 16))
        assert_allclose(pi.values, 1.0)

    def test_underflow(self):
        V = GridField.from_function(lambda x: 2000.0 * np.cos(2 * np.pi * x), 64)
        with pytest.raises(InputError):
            target_from_potential(V)


class TestNormalizationConstant:

    @pytest.mark.parametrize("a", [0.5, 1.0, 3.0])
    def test_bessel_value(self, a):
        # mean of exp(-a cos 2 pi x) over a period is I_0(a)
        V = GridField.from_function(lambda x: a * np.cos(2 * np.pi * x), 128)
        assert normalization_constant(V) == pytest.approx(float(np.i0(a)), rel=1e-13)

    def test_overflow(self):
        V = GridField.constant(-1000.0, 8)
        with pytest.raises(InputError):
            normalization_constant(V)


class TestPotentialSeries:

    def test_matches_grid_values_1d(self):
        V = sample_potential(PotentialSpec(gamma_star=1.5, seed=9, n=64))
        series = PotentialSeries(V)
        points = V.cell_centers()[:, None]
        assert_allclose(series.value_at(points), V.values, atol=1e-12)
        assert_allclose(series.gradient_at(points)[:, 0], grad_potential(V)[0].values, atol=1e-10)

    def test_matches_grid_values_2d(self):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=2, seed=9, n=16))
        series = PotentialSeries(V)
        x, y = V.coordinates()
        points = np.stack([x.ravel(), y.ravel()], axis=1)
        grad = series.gradient_at(points)
        assert grad.shape == (256, 2)
        assert_allclose(series.value_at(points), V.values.ravel(), atol=1e-12)
        for axis, component in enumerate(grad_potential(V)):
            assert_allclose(grad[:, axis], component.values.ravel(), atol=1e-10)

    def test_off_grid_trigonometric(self):
        V = GridField.from_function(lambda x: np.cos(2 * np.pi * 3 * x), 32)
        series = PotentialSeries(V)
        points = np.array([[0.013], [0.4], [0.777]])
        assert_allclose(series.value_at(points), np.cos(6 * np.pi * points[:, 0]), atol=1e-13)
        assert_allclose(series.gradient_at(points)[:, 0], -6 * np.pi * np.sin(6 * np.pi * points[:, 0]), atol=1e-12)
