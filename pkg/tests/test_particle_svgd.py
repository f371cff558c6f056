import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import config_text
from exceptions import InputError
from experiment_config import parse_config
from particle_svgd import (
    AskeyKernel,
    ParticleEnsemble,
    askey_kernel,
    askey_kernel_grad,
    empirical_spectrum,
    interaction_sum_cell_list,
    interaction_sum_naive,
    kernel_spectrum_check,
    run_particles,
    svgd_step,
    wrap_displacement,
)
from random_fields import PotentialSeries, PotentialSpec, sample_potential
from spectral_core import GridField, to_spectrum, truncated_l2_distance


def particles_config(**overrides):
    values = dict(mode="particles", dim=2, grid_n=32, gamma_star=2.0, seed=4, max_iterations=10,
                  particles_n=100, sample_every_iterations=5)
    values.update(overrides)
    return parse_config(config_text(**values))


class TestWrapDisplacement:

    def test_min_image(self):
        assert wrap_displacement(0.9, 0.1) == pytest.approx(-0.2)
        assert wrap_displacement(0.1, 0.9) == pytest.approx(0.2)
        assert wrap_displacement(0.3, 0.1) == pytest.approx(0.2)

    def test_range(self, rng):
        d = wrap_displacement(rng.random((500, 2)), rng.random((500, 2)))
        assert np.all(d >= -0.5) and np.all(d < 0.5)


class TestAskeyKernel:

    def test_values(self):
        assert askey_kernel(np.array([0.0])) == 1.0
        assert askey_kernel(np.array([0.125])) == pytest.approx(0.125)
        assert askey_kernel(np.array([0.25])) == 0.0
        assert askey_kernel(np.array([0.0, 0.3])) == 0.0
        # exponent d + 2 in two dimensions
        assert askey_kernel(np.array([0.125, 0.0])) == pytest.approx(0.5 ** 4)

    @pytest.mark.parametrize("r", [[0.1], [-0.07], [0.05, -0.1], [0.12, 0.03]])
    def test_gradient_matches_finite_differences(self, r):
        r = np.array(r)
        h = 1e-7
        numeric = np.array([
            (askey_kernel(r + h * e) - askey_kernel(r - h * e)) / (2 * h) for e in np.eye(len(r))
        ])
        assert_allclose(askey_kernel_grad(r), numeric, rtol=1e-6, atol=1e-9)

    def test_gradient_vanishes_at_origin_and_outside(self):
        assert_allclose(askey_kernel_grad(np.zeros(2)), 0.0)
        assert_allclose(askey_kernel_grad(np.array([0.3, 0.0])), 0.0)

    def test_kernel_object(self):
        kernel = AskeyKernel(2)
        assert kernel.exponent == 4
        assert kernel.equivalent_riesz_order == 1.5

    def test_gradient_is_odd(self, rng):
        for dim in (1, 2, 3):
            r = rng.uniform(-0.3, 0.3, (50, dim))
            assert_allclose(askey_kernel_grad(-r), -askey_kernel_grad(r), atol=1e-15)


class TestInteractionSums:

    @pytest.mark.parametrize("dim, n", [(1, 300), (2, 400)])
    def test_cell_list_matches_naive(self, rng, dim, n):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=dim, seed=1, n=32))
        positions = rng.random((n, dim))
        grad_V = PotentialSeries(V).gradient_at(positions)
        kernel = AskeyKernel(dim)
        # compared at the scale of the SVGD direction, i.e. divided by the particle count
        assert_allclose(
            interaction_sum_cell_list(positions, grad_V, kernel) / n,
            interaction_sum_naive(positions, grad_V, kernel) / n,
            rtol=0, atol=1e-12,
        )


    @pytest.mark.parametrize("dim", [1, 2])
    def test_repulsion_sums_to_zero(self, rng, dim):
        positions = rng.random((200, dim))
        total = interaction_sum_naive(positions, np.zeros_like(positions), AskeyKernel(dim)).sum(axis=0)
        assert_allclose(total, 0.0, atol=1e-10)


def zero_gradient(points):
    return np.zeros_like(points)


class TestSvgdStep:

    def test_single_particle_is_gradient_descent(self):
        ensemble = ParticleEnsemble(np.array([[0.5, 0.25]]), step_size=0.05)
        moved = svgd_step(ensemble, lambda p: np.tile([0.3, -0.2], (len(p), 1)), AskeyKernel(2))
        assert_allclose(moved.positions, [[0.5 - 0.05 * 0.3, 0.25 + 0.05 * 0.2]], atol=1e-15)

    def test_pair_repels_along_connecting_line(self):
        ensemble = ParticleEnsemble(np.array([[0.4, 0.5], [0.525, 0.5]]), step_size=0.05)
        moved = svgd_step(ensemble, zero_gradient, AskeyKernel(2))
        # |grad K| = 4 (d+2) (1/2)^(d+1) = 2 at distance 1/8, halved by the particle count
        assert_allclose(moved.positions, [[0.35, 0.5], [0.575, 0.5]], atol=1e-12)

    def test_permutation_equivariant(self, rng):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=2, seed=5, n=16))
        series = PotentialSeries(V)
        ensemble = ParticleEnsemble.uniform(120, 2, rng)
        order = rng.permutation(120)
        moved = svgd_step(ensemble, series.gradient_at, AskeyKernel(2))
        permuted = svgd_step(ParticleEnsemble(ensemble.positions[order]), series.gradient_at, AskeyKernel(2))
        assert np.max(np.abs(wrap_displacement(permuted.positions, moved.positions[order]))) <= 1e-12

    def test_translation_equivariant_without_potential(self, rng):
        ensemble = ParticleEnsemble.uniform(120, 2, rng)
        shift = np.array([0.37, 0.81])
        moved = svgd_step(ensemble, zero_gradient, AskeyKernel(2))
        shifted = svgd_step(ParticleEnsemble(np.mod(ensemble.positions + shift, 1.0)), zero_gradient, AskeyKernel(2))
        assert np.max(np.abs(wrap_displacement(shifted.positions, moved.positions + shift))) <= 1e-12


    def test_uniform_lattice_is_stationary_without_potential(self):
        ensemble = ParticleEnsemble.lattice(20, 2, step_size=0.05)
        series = PotentialSeries(GridField.constant(0.0, 16, 2))
        moved = svgd_step(ensemble, series.gradient_at, AskeyKernel(2))
        assert np.max(np.abs(wrap_displacement(moved.positions, ensemble.positions))) <= 1e-12
        assert moved.iteration == 1

    def test_positions_stay_on_torus(self, rng):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=2, amplitude=3.0, seed=2, n=16))
        ensemble = ParticleEnsemble.uniform(200, 2, rng, step_size=0.5)
        moved = svgd_step(ensemble, PotentialSeries(V).gradient_at, AskeyKernel(2))
        assert np.all(moved.positions >= 0) and np.all(moved.positions < 1)

    def test_naive_and_cell_list_steps_agree(self, rng):
        V = sample_potential(PotentialSpec(gamma_star=2.0, dim=2, seed=5, n=16))
        ensemble = ParticleEnsemble.uniform(150, 2, rng)
        series = PotentialSeries(V)
        a = svgd_step(ensemble, series.gradient_at, AskeyKernel(2), use_cell_list=True)
        b = svgd_step(ensemble, series.gradient_at, AskeyKernel(2), use_cell_list=False)
        assert np.max(np.abs(wrap_displacement(a.positions, b.positions))) <= 1e-12


class TestParticleEnsemble:

    def test_rejects_points_off_torus(self):
        with pytest.raises(InputError):
            ParticleEnsemble(np.array([[0.5, 1.0]]))

    def test_rejects_bad_step(self):
        with pytest.raises(InputError):
            ParticleEnsemble(np.array([[0.5, 0.5]]), step_size=0.0)


class TestEmpiricalSpectrum:

    def test_single_particle(self):
        F = empirical_spectrum(ParticleEnsemble(np.array([[0.25]])), 2)
        assert F.n == 5
        assert F.coefficients[0] == pytest.approx(1.0)
        assert F.coefficients[1] == pytest.approx(-1j)
        assert F.coefficients[-1] == pytest.approx(1j)

    def test_lattice_matches_uniform_target(self):
        ensemble = ParticleEnsemble.lattice(20, 2)
        F = empirical_spectrum(ensemble, 8)
        uniform = to_spectrum(GridField.constant(1.0, 32, 2))
        assert truncated_l2_distance(F, uniform, 8) < 1e-13

    def test_cutoff(self):
        with pytest.raises(InputError):
            empirical_spectrum(ParticleEnsemble(np.array([[0.5]])), 0)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_hermitian(self, rng, dim):
        F = empirical_spectrum(ParticleEnsemble.uniform(50, dim, rng), 5)
        axes = tuple(range(dim))
        mirrored = np.roll(np.flip(F.coefficients, axis=axes), 1, axis=axes)
        assert_allclose(F.coefficients, np.conj(mirrored), atol=1e-14)


class TestKernelSpectrumCheck:

    @pytest.mark.parametrize("dim, resolution", [(1, 4096), (2, 512)])
    def test_decay_exponent(self, dim, resolution):
        fit, smallest = kernel_spectrum_check(dim, resolution)
        assert smallest > 0
        assert fit.slope == pytest.approx(-(dim + 1), rel=0.1)


class TestRunParticles:

    def test_rows_and_schema(self):
        result = run_particles(particles_config())
        assert [row.t for row in result.rows] == pytest.approx([0.0, 0.25, 0.5])
        assert all(row.entropy is None and row.ksd is None for row in result.rows)
        assert all(row.mass == pytest.approx(1.0) for row in result.rows)
        assert result.positions.shape == (100, 2)
        assert list(result.secondary_rows) == [16]

    def test_deterministic(self):
        config = particles_config()
        a = run_particles(config)
        b = run_particles(config)
        assert np.array_equal(a.positions, b.positions)
        assert [row.as_dict() for row in a.rows] == [row.as_dict() for row in b.rows]

    def test_lattice_start(self):
        result = run_particles(particles_config(particle_init="lattice", particles_n=100, secondary_cutoff=0))
        assert result.secondary_rows == {}
        assert result.rows[0].l2_error > 0

    def test_lattice_without_potential_stays_exact(self):
        config = particles_config(particle_init="lattice", particles_n=100, secondary_cutoff=0)
        result = run_particles(config, V=GridField.constant(0.0, 32, 2))
        assert all(row.l2_error <= 1e-12 for row in result.rows)
