"""
Flat key=value experiment configuration.

    # comment
    mode=meanfield
    grid_n=2048
    s=2
    gamma_star=1.5
    seed=7
    t_end=50

Unknown keys are rejected; every error message starts with the offending key.
echo_config writes the fully resolved config back in the same format.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from exceptions import ConfigurationError
from spectral_core import is_power_of_two

MODES = ("meanfield", "particles", "linearized", "kernel_check")

REQUIRED_BY_MODE = {
    "meanfield": ("t_end",),
    "linearized": ("t_end",),
    "particles": ("max_iterations",),
    "kernel_check": (),
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Literal["meanfield", "particles", "linearized", "kernel_check"]
    dim: int = 1
    grid_n: int = 2048
    s: float = 2.0
    gamma_star: float = 1.5
    amplitude: float = 1.0
    seed: int = 0
    run_id: Optional[str] = None
    output_dir: Path = Path("results")

    # mean-field time stepping
    t_end: Optional[float] = None
    cfl_number: float = 0.4
    dt_max: float = 0.01
    sample_every: float = 0.1
    strang_splitting: bool = False
    dealias: bool = False
    snapshot_every: float = 0.0

    # initial condition: uniform rho = 1, or pi + epsilon * single mode
    init: Literal["uniform", "perturbed"] = "uniform"
    epsilon: float = 1e-3
    mode_index: int = 1

    # potential I/O
    potential_file: Optional[Path] = None
    export_potential: bool = True

    # particles
    max_iterations: Optional[int] = None
    particles_n: int = 2000
    step_size: float = 0.05
    fourier_cutoff: int = 8
    secondary_cutoff: int = 16
    sample_every_iterations: int = 5
    particle_init: Literal["random", "lattice"] = "random"
    use_cell_list: bool = True

    # rate fits
    fit_window_lo: Optional[float] = None
    fit_window_hi: Optional[float] = None

    @field_validator("grid_n")
    @classmethod
    def _grid_power_of_two(cls, value):
        if not is_power_of_two(value):
            raise ValueError("grid_n must be a power of two")
        return value

    @field_validator("dim")
    @classmethod
    def _dim_range(cls, value):
        if not 1 <= value <= 3:
            raise ValueError("dim must be 1, 2 or 3")
        return value

    @field_validator("s")
    @classmethod
    def _kernel_order(cls, value):
        if value < 1:
            raise ValueError("s must be ≥ 1")
        return value

    @field_validator("cfl_number")
    @classmethod
    def _cfl_range(cls, value):
        if not 0 < value < 1:
            raise ValueError("cfl_number must lie in (0, 1)")
        return value

    @field_validator("dt_max", "sample_every", "amplitude", "step_size", "epsilon")
    @classmethod
    def _positive(cls, value, info):
        if value <= 0:
            raise ValueError(f"{info.field_name} must be positive")
        return value

    @field_validator("t_end")
    @classmethod
    def _positive_end(cls, value):
        if value is not None and value <= 0:
            raise ValueError("t_end must be positive")
        return value

    @field_validator("particles_n", "fourier_cutoff", "sample_every_iterations", "mode_index")
    @classmethod
    def _positive_int(cls, value, info):
        if value < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return value

    @field_validator("secondary_cutoff", "max_iterations")
    @classmethod
    def _non_negative_int(cls, value, info):
        if value is not None and value < 0:
            raise ValueError(f"{info.field_name} must be non-negative")
        return value

    @field_validator("snapshot_every")
    @classmethod
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("snapshot_every must be non-negative")
        return value

    @model_validator(mode="after")
    def _mode_requirements(self):
        for key in REQUIRED_BY_MODE[self.mode]:
            if getattr(self, key) is None:
                raise ValueError(f"{key} is required for mode={self.mode}")
        if self.mode == "linearized" and self.dim != 1:
            raise ValueError("dim must be 1 for mode=linearized")
        if self.mode in ("meanfield", "particles") and self.potential_file is None:
            if self.gamma_star <= self.dim / 2:
                raise ValueError(f"gamma_star must exceed d/2 = {self.dim / 2}")
        if self.mode == "particles":
            if self.fourier_cutoff > self.grid_n // 2:
                raise ValueError("fourier_cutoff must not exceed grid_n/2")
            if self.secondary_cutoff > self.grid_n // 2:
                raise ValueError("secondary_cutoff must not exceed grid_n/2")
            if self.particle_init == "lattice":
                side = round(self.particles_n ** (1.0 / self.dim))
                if side ** self.dim != self.particles_n:
                    raise ValueError(f"particles_n must be a perfect power of {self.dim} for particle_init=lattice")
        # the Nyquist mode has no gradient on the grid
        if (self.mode == "linearized" or self.init == "perturbed") and self.mode_index >= self.grid_n // 2:
            raise ValueError(f"mode_index must be below grid_n/2 = {self.grid_n // 2}")
        return self

    @property
    def resolved_run_id(self):
        return self.run_id or self.output_dir.name


def _format_error(error):
    location = ".".join(str(part) for part in error["loc"])
    message = error["msg"].removeprefix("Value error, ")
    if error["type"] == "extra_forbidden":
        return f"{location}: unknown key"
    if not location:
        return message
    return f"{location}: {message}"


def _build(values):
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigurationError("; ".join(_format_error(error) for error in e.errors())) from None


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {line_number}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {line_number}: empty key")
        if key in values:
            raise ConfigurationError(f"{key}: given twice (line {line_number})")
        values[key] = value
    return _build(values)


def load_config(path) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())


def replace_config(config: ExperimentConfig, **changes) -> ExperimentConfig:
    '''Validated copy with some fields changed'''
    values = config.model_dump(exclude_none=True)
    values.update(changes)
    return _build(values)


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def echo_config(config: ExperimentConfig) -> str:
    '''Every resolved field as sorted key=value lines; unset optional keys are omitted'''
    lines = []
    for key in sorted(ExperimentConfig.model_fields):
        value = getattr(config, key)
        if value is None:
            continue
        lines.append(f"{key}={_format_value(value)}")
    return "\n".join(lines) + "\n"
