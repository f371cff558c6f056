from pathlib import Path

import pytest

from conftest import config_text
from exceptions import ConfigurationError
from experiment_config import echo_config, load_config, parse_config, replace_config


class TestParseConfig:

    def test_minimal_meanfield_gets_defaults(self, meanfield_text):
        config = parse_config(meanfield_text)
        assert config.mode == "meanfield"
        assert config.grid_n == 2048
        assert config.s == 2.0
        assert config.gamma_star == 1.5
        assert config.seed == 7
        assert config.t_end == 50.0
        assert config.cfl_number == 0.4
        assert config.amplitude == 1.0
        assert config.fourier_cutoff == 8
        assert config.dt_max == 0.01
        assert config.output_dir == Path("results")

    def test_comments_and_blank_lines(self):
        text = "# header\n\nmode=kernel_check   # inline\n  dim = 2\n"
        config = parse_config(text)
        assert config.mode == "kernel_check"
        assert config.dim == 2

    def test_grid_not_power_of_two(self):
        with pytest.raises(ConfigurationError, match="grid_n must be a power of two"):
            parse_config(config_text(mode="meanfield", grid_n=1000, t_end=1))

    def test_kernel_order_below_one(self):
        with pytest.raises(ConfigurationError, match="s must be ≥ 1"):
            parse_config(config_text(mode="meanfield", s=0.5, t_end=1))

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="^colour: unknown key"):
            parse_config(config_text(mode="meanfield", t_end=1, colour="red"))

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigurationError, match="^seed: "):
            parse_config(config_text(mode="meanfield", t_end=1, seed="abc"))

    @pytest.mark.parametrize("mode, key", [("meanfield", "t_end"), ("linearized", "t_end"), ("particles", "max_iterations")])
    def test_mode_requirements(self, mode, key):
        with pytest.raises(ConfigurationError, match=f"^{key} is required for mode={mode}"):
            parse_config(config_text(mode=mode))

    def test_kernel_check_needs_nothing(self):
        assert parse_config("mode=kernel_check\n").mode == "kernel_check"

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError, match="^mode"):
            parse_config(config_text(mode="stochastic"))

    def test_duplicate_key(self):
        with pytest.raises(ConfigurationError, match="^seed: given twice"):
            parse_config("mode=kernel_check\nseed=1\nseed=2\n")

    def test_line_without_equals(self):
        with pytest.raises(ConfigurationError, match="line 2"):
            parse_config("mode=kernel_check\ngrid_n 64\n")

    def test_regularity_against_dimension(self):
        with pytest.raises(ConfigurationError, match="gamma_star"):
            parse_config(config_text(mode="particles", dim=2, gamma_star=1.0, max_iterations=10, grid_n=64))

    def test_lattice_needs_perfect_power(self):
        with pytest.raises(ConfigurationError, match="particles_n"):
            parse_config(config_text(mode="particles", dim=2, max_iterations=10, particles_n=2000, particle_init="lattice"))

    def test_cfl_range(self):
        with pytest.raises(ConfigurationError, match="^cfl_number"):
            parse_config(config_text(mode="meanfield", t_end=1, cfl_number=1.2))

    @pytest.mark.parametrize("mode, extra", [
        ("meanfield", dict(t_end=1)),
        ("linearized", dict(t_end=1)),
        ("kernel_check", dict()),
    ])
    def test_small_grid_ignores_particle_cutoffs(self, mode, extra):
        config = parse_config(config_text(mode=mode, grid_n=8, **extra))
        assert config.grid_n == 8
        assert config.secondary_cutoff > config.grid_n // 2

    def test_particle_cutoff_above_half_grid(self):
        with pytest.raises(ConfigurationError, match="secondary_cutoff"):
            parse_config(config_text(mode="particles", grid_n=16, max_iterations=10))

    @pytest.mark.parametrize("text", [
        config_text(mode="linearized", grid_n=64, t_end=1, mode_index=32),
        config_text(mode="linearized", grid_n=64, t_end=1, mode_index=40),
        config_text(mode="meanfield", grid_n=64, t_end=1, init="perturbed", mode_index=32),
    ])
    def test_mode_index_below_nyquist(self, text):
        with pytest.raises(ConfigurationError, match="mode_index must be below grid_n/2 = 32"):
            parse_config(text)

    def test_mode_index_unused_for_uniform_start(self):
        config = parse_config(config_text(mode="meanfield", grid_n=64, t_end=1, mode_index=40))
        assert config.mode_index == 40
        assert parse_config(config_text(mode="linearized", grid_n=64, t_end=1, mode_index=31)).mode_index == 31

    def test_frozen(self, meanfield_text):
        config = parse_config(meanfield_text)
        with pytest.raises(Exception):
            config.seed = 3


class TestEchoConfig:

    def test_round_trip(self, meanfield_text):
        config = parse_config(meanfield_text + "epsilon=0.001\nstrang_splitting=true\nrun_id=demo\n")
        assert parse_config(echo_config(config)) == config

    def test_sorted_and_complete(self, meanfield_text):
        lines = echo_config(parse_config(meanfield_text)).splitlines()
        keys = [line.split("=", 1)[0] for line in lines]
        assert keys == sorted(keys)
        assert "cfl_number=0.4" in lines
        assert "export_potential=true" in lines
        # unset optional keys are left out
        assert not any(key == "max_iterations" for key in keys)

    def test_floats_keep_full_precision(self):
        config = parse_config("mode=meanfield\nt_end=0.1\namplitude=0.30000000000000004\n")
        assert "amplitude=0.30000000000000004" in echo_config(config).splitlines()


def test_load_config(tmp_path, meanfield_text):
    path = tmp_path / "run.cfg"
    path.write_text(meanfield_text)
    assert load_config(path) == parse_config(meanfield_text)


def test_replace_config_validates(meanfield_text):
    config = parse_config(meanfield_text)
    assert replace_config(config, seed=9).seed == 9
    with pytest.raises(ConfigurationError, match="grid_n"):
        replace_config(config, grid_n=100)


def test_resolved_run_id(meanfield_text):
    config = parse_config(meanfield_text + "output_dir=results/fig1b_s20/gamma_1.5\n")
    assert config.resolved_run_id == "gamma_1.5"
    assert replace_config(config, run_id="named").resolved_run_id == "named"
