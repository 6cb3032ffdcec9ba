"""
Configuration management for esbgk-slab.
Handles loading/saving run configurations, schema validation and the mapping
from the on-disk RunConfig to an in-memory SolverConfig.
"""

import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .boundary import (
    SIMPLEX_TOL,
    Regime,
    build_boundary_spec,
    drifting_maxwellian,
    rescale_inflow_flux,
    resample_table,
)
from .error_handler import ConfigurationError
from .file_manager import FileManager
from .quadrature import VelocityGrid, build_spatial_grid, build_velocity_grid
from .solver_controller import SolverConfig

SCHEMA_VERSION = 1
CUTOFF_FACTOR = 8.0
SWEEP_AXES = ("nu", "tau", "delta", "discrepancy")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    nu: float = 0.0
    kappa: float = Field(default=100.0, gt=0)
    model: Literal["esbgk", "bgk"] = "esbgk"
    closure: Literal["discrete", "analytic"] = "discrete"

    @field_validator("nu")
    @classmethod
    def _nu_range(cls, value: float) -> float:
        if not (-0.5 <= value < 1.0):
            raise ValueError(f"nu must lie in [-1/2, 1), got {value}")
        return value


class GridSection(_Section):
    cutoff: Optional[float] = Field(default=None, gt=0)
    counts: tuple[int, int, int] = (24, 16, 16)
    spatial_intervals: int = Field(default=64, ge=1)


class MaxwellianParams(_Section):
    density: float = Field(default=1.0, ge=0)
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    temperature: float = Field(default=1.0, gt=0)
    flux: Optional[float] = Field(default=None, gt=0)


class BoundaryData(_Section):
    """One boundary slot: a Maxwellian, a table, or a reference to a JSON file holding either."""

    type: Optional[Literal["maxwellian", "table"]] = None
    params: Optional[MaxwellianParams] = None
    values: Optional[list[float]] = None
    nodes: Optional[list[tuple[float, float, float]]] = None
    mass: Optional[float] = Field(default=None, gt=0)
    file: Optional[str] = None
    side: Optional[Literal[0, 1]] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "BoundaryData":
        if self.file is not None:
            if self.type is not None:
                raise ValueError("Boundary entry takes either 'file' or 'type', not both")
            return self
        if self.type is None:
            raise ValueError("Boundary entry needs 'type' or 'file'")
        if self.type == "maxwellian" and self.values is not None:
            raise ValueError("Maxwellian boundary entries take 'params', not 'values'")
        if self.type == "table":
            if self.values is None:
                raise ValueError("Table boundary entries need 'values'")
            if self.nodes is not None and len(self.nodes) != len(self.values):
                raise ValueError(
                    f"Table has {len(self.nodes)} nodes but {len(self.values)} values"
                )
        return self


def _default_slot(side: int) -> BoundaryData:
    return BoundaryData(type="maxwellian", params=MaxwellianParams(), side=side)


class BoundarySection(_Section):
    regime: Literal["inflow", "diffusive"] = "inflow"
    delta: tuple[float, float, float] = (1.0, 0.0, 0.0)
    wall_temperatures: tuple[float, float] = (1.0, 1.0)
    left: BoundaryData = Field(default_factory=lambda: _default_slot(0))
    right: BoundaryData = Field(default_factory=lambda: _default_slot(1))

    @field_validator("delta")
    @classmethod
    def _simplex(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if min(value) < 0:
            raise ValueError(f"delta weights must be nonnegative, got {value}")
        total = sum(value)
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(
                f"delta must lie on the simplex delta1 + delta2 + delta3 = 1, got sum {total!r}"
            )
        return value

    @field_validator("wall_temperatures")
    @classmethod
    def _positive_walls(cls, value: tuple[float, float]) -> tuple[float, float]:
        if min(value) <= 0:
            raise ValueError(f"Wall temperatures must be positive, got {value}")
        return value


class SolverSection(_Section):
    tol: float = Field(default=1e-10, gt=0)
    max_iter: int = Field(default=200, ge=1)
    initial_guess: Literal["boundary", "wall_blend"] = "boundary"
    strict: bool = False


class OutputSection(_Section):
    directory: str = "output"
    dump_field: bool = False
    plot: bool = False


class VerifySection(_Section):
    seed: int = Field(default=20240601, ge=0)
    moment_samples: int = Field(default=50, ge=1)
    tensor_samples: int = Field(default=200, ge=1)
    identity_fields: int = Field(default=20, ge=1)
    identity_directions: int = Field(default=20, ge=1)
    moment_counts: tuple[int, int, int] = (32, 32, 32)
    contraction_iterations: int = Field(default=8, ge=3)


class TrackingSection(_Section):
    wandb: bool = False
    project: str = "esbgk-slab"


class RunConfig(_Section):
    """On-disk run configuration."""

    schema_version: Literal[1] = SCHEMA_VERSION
    model: ModelSection = Field(default_factory=ModelSection)
    grid: GridSection = Field(default_factory=GridSection)
    boundary: BoundarySection = Field(default_factory=BoundarySection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)
    verify: VerifySection = Field(default_factory=VerifySection)
    tracking: TrackingSection = Field(default_factory=TrackingSection)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


class ConfigManager:
    """Manages configuration loading, saving, and validation."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)
        self.file_manager = FileManager()

    def validate_config(self, raw: Dict[str, Any]) -> tuple[bool, str]:
        """
        Validate a raw configuration mapping against the schema.

        Args:
            raw: Parsed JSON configuration

        Returns:
            tuple[bool, str]: (is_valid, error_message)
        """
        try:
            RunConfig.model_validate(raw)
            return True, ""
        except ValidationError as e:
            return False, _format_validation_error(e)

    def load_config(self, path: Union[str, Path]) -> RunConfig:
        """
        Load and validate a run configuration.

        Args:
            path: Path to the JSON configuration

        Returns:
            RunConfig

        Raises:
            ConfigurationError: If the file is unreadable or violates the schema
        """
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"Configuration file {path} does not exist")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Configuration file {path} is not valid JSON: {e}")

        if not isinstance(raw, dict):
            raise ConfigurationError(f"Configuration file {path} must hold a JSON object")

        try:
            config = RunConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration {path}: {_format_validation_error(e)}")
        self.logger.info(f"Configuration loaded from {path}")
        return config

    def save_config(self, config: RunConfig, path: Union[str, Path]) -> bool:
        """
        Save a run configuration as JSON.

        Returns:
            bool: True if saved successfully
        """
        try:
            self.file_manager.write_json_atomic(Path(path), config.model_dump(mode="json"))
            self.logger.info(f"Configuration saved to {path}")
            return True
        except OSError as e:
            self.logger.error(f"Failed to save configuration: {e}")
            return False

    def get_default_config(self) -> RunConfig:
        """Equilibrium inflow problem with unit Maxwellian data at both walls."""
        return RunConfig()

    def resolve_cutoff(self, config: RunConfig) -> float:
        """Configured cutoff, or 8 sqrt(T_max) over wall and Maxwellian temperatures."""
        if config.grid.cutoff is not None:
            return float(config.grid.cutoff)
        temperatures = list(config.boundary.wall_temperatures)
        for slot in (config.boundary.left, config.boundary.right):
            if slot.type == "maxwellian" and slot.params is not None:
                temperatures.append(slot.params.temperature)
        return CUTOFF_FACTOR * math.sqrt(max(temperatures))

    def _boundary_values(self, entry: BoundaryData, slot: int, grid: VelocityGrid,
                         base_dir: Path) -> np.ndarray:
        if entry.side is not None and entry.side != slot:
            raise ConfigurationError(
                f"Boundary entry for wall {slot} declares side {entry.side}"
            )
        if entry.file is not None:
            path = Path(entry.file)
            if not path.is_absolute():
                path = base_dir / path
            raw = self.file_manager.load_boundary_file(path)
            try:
                nested = BoundaryData.model_validate(raw)
            except ValidationError as e:
                raise ConfigurationError(
                    f"Invalid boundary file {path}: {_format_validation_error(e)}"
                )
            if nested.file is not None:
                raise ConfigurationError(f"Boundary file {path} may not reference another file")
            return self._boundary_values(nested, slot, grid, path.parent)

        if entry.type == "maxwellian":
            params = entry.params or MaxwellianParams()
            return drifting_maxwellian(grid, params.density, params.velocity, params.temperature,
                                       side=slot, flux=params.flux)

        values = np.asarray(entry.values, dtype=float)
        if entry.nodes is not None:
            return resample_table(grid, np.asarray(entry.nodes, dtype=float), values, slot,
                                  mass=entry.mass)
        if values.shape != (grid.size,):
            raise ConfigurationError(
                f"On-grid table for wall {slot} has {values.size} values, grid has {grid.size} nodes"
            )
        return values

    def build_solver_config(self, config: RunConfig, base_dir: Union[str, Path] = ".") -> SolverConfig:
        """
        Build grids and boundary data for a run configuration.

        Args:
            config: Validated run configuration
            base_dir: Directory that relative boundary file references resolve against

        Returns:
            SolverConfig ready for the solver

        Raises:
            ConfigurationError: On invalid grids or boundary data
        """
        base_dir = Path(base_dir)
        velocity = build_velocity_grid(self.resolve_cutoff(config), config.grid.counts)
        spatial = build_spatial_grid(config.grid.spatial_intervals)
        boundary = config.boundary
        spec = build_boundary_spec(
            velocity,
            boundary.delta,
            boundary.wall_temperatures,
            self._boundary_values(boundary.left, 0, velocity, base_dir),
            self._boundary_values(boundary.right, 1, velocity, base_dir),
            regime=Regime(boundary.regime),
        )
        solver_config = SolverConfig(
            nu=config.model.nu,
            kappa=config.model.kappa,
            spec=spec,
            velocity=velocity,
            spatial=spatial,
            tol=config.solver.tol,
            max_iter=config.solver.max_iter,
            initial_guess=config.solver.initial_guess,
            model=config.model.model,
            closure=config.model.closure,
            strict=config.solver.strict,
        )
        valid, message = solver_config.validate()
        if not valid:
            raise ConfigurationError(message)
        return solver_config


def apply_sweep_value(config: SolverConfig, axis: str, value: float) -> SolverConfig:
    """
    Copy of config with one sweep axis set.

    tau keeps nu and sets kappa = tau / (1 - nu); delta sets delta1 and splits the rest
    over delta2, delta3 in the base proportion; discrepancy rescales f_L so its flux
    exceeds the f_R flux by value; nu keeps kappa.
    """
    value = float(value)
    if axis == "nu":
        return replace(config, nu=value)
    if axis == "tau":
        if value <= 0:
            raise ConfigurationError(f"tau must be positive, got {value}")
        return replace(config, kappa=value / (1.0 - config.nu))
    if axis == "delta":
        if not 0.0 <= value <= 1.0:
            raise ConfigurationError(f"delta1 must lie in [0, 1], got {value}")
        _, d2, d3 = config.spec.delta
        rest = 1.0 - value
        if d2 + d3 > 0:
            delta = (value, rest * d2 / (d2 + d3), rest * d3 / (d2 + d3))
        else:
            delta = (value, rest, 0.0)
        return replace(config, spec=replace(config.spec, delta=delta))
    if axis == "discrepancy":
        _, flux_right = config.spec.inflow_fluxes(config.velocity)
        return replace(config, spec=rescale_inflow_flux(config.spec, config.velocity,
                                                        flux_right + value))
    raise ConfigurationError(f"Sweep axis must be one of {list(SWEEP_AXES)}, got '{axis}'")
