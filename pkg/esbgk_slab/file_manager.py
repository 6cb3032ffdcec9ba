"""
File management utilities for esbgk-slab.
Handles output directories, atomic writes, profile/report/sweep files and plots.
"""

import csv
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Sequence, Union

import numpy as np

from .error_handler import ConfigurationError, ContractViolation

if TYPE_CHECKING:
    from .solver_controller import SolverConfig, SolverResult

PROFILE_COLUMNS = (
    "x", "rho", "U1", "U2", "U3", "T",
    "Theta11", "Theta22", "Theta33", "Theta12", "Theta13", "Theta23",
    "lambda1", "lambda2", "lambda3", "flux",
)
SWEEP_COLUMNS = (
    "value", "converged", "iterations", "contraction_rate", "min_eigenvalue", "u1_max", "termination",
)
_THETA_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


def _format_float(value: float) -> str:
    return f"{float(value):.17g}"


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class FileManager:
    """Manages file operations for esbgk-slab."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def create_output_directory(self, output_dir: Union[str, Path]) -> Path:
        output_path = Path(output_dir)
        output_path.mkdir(parents=True, exist_ok=True)
        self.logger.debug(f"Output directory {output_path}")
        return output_path

    def write_text_atomic(self, path: Path, text: str):
        """Write text through a temporary file in the same directory, then rename."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    def write_json_atomic(self, path: Path, data: Dict[str, Any]):
        self.write_text_atomic(path, json.dumps(data, indent=2, default=_json_default) + "\n")

    def load_boundary_file(self, path: Union[str, Path]) -> Dict[str, Any]:
        """
        Load a boundary data file referenced from a run configuration.

        Raises:
            ConfigurationError: If the file is missing or not a JSON object
        """
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"Boundary file {path} does not exist")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Boundary file {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Boundary file {path} must hold a JSON object")
        return data

    def profile_table(self, result: "SolverResult") -> Dict[str, np.ndarray]:
        """
        Per-node macroscopic profile of a solve.

        Raises:
            ContractViolation: If the result carries no closure of its final iterate
        """
        from .transport import mass_flux

        if result.profile is None or result.tensor is None:
            raise ContractViolation("Result has no macroscopic profile")
        macro, tensor = result.profile, result.tensor
        table = {
            "x": result.field.spatial.nodes,
            "rho": macro.rho,
            "U1": macro.bulk_velocity[:, 0],
            "U2": macro.bulk_velocity[:, 1],
            "U3": macro.bulk_velocity[:, 2],
            "T": macro.temperature,
        }
        for name, (i, j) in zip(PROFILE_COLUMNS[6:12], _THETA_INDEX):
            table[name] = macro.stress_tensor[:, i, j]
        for k in range(3):
            table[f"lambda{k + 1}"] = tensor.eigenvalues[:, k]
        table["flux"] = mass_flux(result.field)
        return table

    def write_profile_csv(self, path: Path, table: Dict[str, np.ndarray]):
        """Profile CSV with the fixed column order and 17 significant digits."""
        columns = [np.asarray(table[name], dtype=float) for name in PROFILE_COLUMNS]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(PROFILE_COLUMNS)
        for row in zip(*columns):
            writer.writerow([_format_float(v) for v in row])
        self.write_text_atomic(path, buffer.getvalue())
        self.logger.info(f"Profile written to {path}")

    def read_profile_csv(self, path: Union[str, Path]) -> Dict[str, np.ndarray]:
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            if tuple(header) != PROFILE_COLUMNS:
                raise ContractViolation(f"Unexpected profile header {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.array(rows, dtype=float).reshape(-1, len(PROFILE_COLUMNS))
        return {name: data[:, k] for k, name in enumerate(PROFILE_COLUMNS)}

    def write_report(self, path: Path, config: "SolverConfig", result: "SolverResult"):
        payload = {"config": config.to_dict(), **result.report.to_dict()}
        self.write_json_atomic(path, payload)
        self.logger.info(f"Report written to {path}")

    def dump_field(self, path: Path, result: "SolverResult"):
        """Binary dump of the final iterate with its grids."""
        f = result.field
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f".{path.stem}.tmp.npz")
        np.savez(
            tmp,
            values=f.values,
            spatial_nodes=f.spatial.nodes,
            velocity_nodes=f.velocity.nodes,
            velocity_weights=f.velocity.weights,
        )
        os.replace(tmp, path)
        self.logger.info(f"Field written to {path}")

    def write_sweep_csv(self, path: Path, rows: Sequence[Dict[str, Any]]):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            cells: List[str] = []
            for name in SWEEP_COLUMNS:
                value = row.get(name)
                if value is None:
                    cells.append("")
                elif isinstance(value, bool):
                    cells.append(str(value).lower())
                elif isinstance(value, float):
                    cells.append(_format_float(value))
                else:
                    cells.append(str(value))
            writer.writerow(cells)
        self.write_text_atomic(path, buffer.getvalue())
        self.logger.info(f"Sweep summary written to {path}")

    def read_sweep_csv(self, path: Union[str, Path]) -> List[Dict[str, str]]:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))

    def write_crash_report(self, output_dir: Union[str, Path], report: str) -> Path:
        path = self.create_output_directory(output_dir) / "crash_report.txt"
        self.write_text_atomic(path, report)
        self.logger.info(f"Crash report written to {path}")
        return path

    def plot_profile(self, path: Path, table: Dict[str, np.ndarray]) -> bool:
        """
        Density, temperature, bulk velocity and tensor eigenvalues against x.

        Returns:
            bool: True if the figure was written
        """
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            self.logger.warning("matplotlib not available; skipping profile plot")
            return False

        x = table["x"]
        fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex=True)
        axes[0, 0].plot(x, table["rho"])
        axes[0, 0].set_ylabel("rho")
        axes[0, 1].plot(x, table["T"])
        axes[0, 1].set_ylabel("T")
        for name in ("U1", "U2", "U3"):
            axes[1, 0].plot(x, table[name], label=name)
        axes[1, 0].set_ylabel("U")
        axes[1, 0].legend()
        for name in ("lambda1", "lambda2", "lambda3"):
            axes[1, 1].plot(x, table[name], label=name)
        axes[1, 1].set_ylabel("eigenvalues")
        axes[1, 1].legend()
        for ax in axes[1]:
            ax.set_xlabel("x")
        fig.tight_layout()
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        self.logger.info(f"Profile plot written to {path}")
        return True
