"""
WandB integration for esbgk-slab.
Provides optional Weights & Biases logging of fixed-point iterations.
"""

import logging
import os
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Optional

try:
    import wandb
    WANDB_AVAILABLE = True
except ImportError:
    WANDB_AVAILABLE = False
    wandb = None

if TYPE_CHECKING:
    from .solver_controller import IterationRecord, IterationReport


class WandBIntegration:
    """Handles WandB logging for solver runs."""

    def __init__(self, project_name: str = "esbgk-slab"):
        self.logger = logging.getLogger(__name__)
        self.run = None
        self.enabled = False
        self.project_name = project_name

    def is_available(self) -> bool:
        """Check if WandB is available."""
        return WANDB_AVAILABLE

    def initialize(self, config: Dict[str, Any], run_name: Optional[str] = None) -> bool:
        """
        Initialize WandB logging.

        Args:
            config: Solver configuration as produced by SolverConfig.to_dict
            run_name: Optional run name

        Returns:
            bool: True if initialized successfully
        """
        if not WANDB_AVAILABLE:
            self.logger.warning("WandB not available. Install with: pip install wandb")
            return False

        try:
            if not self._is_logged_in():
                self.logger.warning("WandB not logged in. Run 'wandb login' to enable logging.")
                return False

            self.run = wandb.init(
                project=self.project_name,
                name=run_name or self.create_run_name(config),
                config=self._create_wandb_config(config),
                tags=self._create_tags(config),
            )
            self.enabled = True
            self.logger.info(f"WandB initialized: {self.run.url}")
            return True

        except Exception as e:
            self.logger.error(f"Failed to initialize WandB: {e}")
            return False

    def _is_logged_in(self) -> bool:
        if os.environ.get("WANDB_API_KEY"):
            return True
        return (Path.home() / ".netrc").exists() or (Path.home() / ".wandb" / "settings").exists()

    def _create_wandb_config(self, config: Dict[str, Any]) -> Dict[str, Any]:
        boundary = config.get("boundary", {})
        grid = config.get("velocity_grid", {})
        return {
            "nu": config.get("nu"),
            "kappa": config.get("kappa"),
            "tau": config.get("tau"),
            "model": config.get("model"),
            "closure": config.get("closure"),
            "tol": config.get("tol"),
            "max_iter": config.get("max_iter"),
            "regime": boundary.get("regime"),
            "delta": boundary.get("delta"),
            "wall_temperatures": boundary.get("wall_temperatures"),
            "velocity_counts": grid.get("counts"),
            "cutoff": grid.get("cutoff"),
            "spatial_intervals": config.get("spatial_intervals"),
        }

    def _create_tags(self, config: Dict[str, Any]) -> List[str]:
        tags = ["esbgk-slab", config.get("model", "esbgk")]
        regime = config.get("boundary", {}).get("regime")
        if regime:
            tags.append(f"regime-{regime}")
        if config.get("nu") == -0.5:
            tags.append("critical")
        return tags

    def create_run_name(self, config: Dict[str, Any]) -> str:
        regime = config.get("boundary", {}).get("regime", "run")
        return f"{regime}_nu{config.get('nu')}_tau{config.get('tau', 0):.4g}"

    def log_metrics(self, metrics: Dict[str, Any], step: Optional[int] = None):
        if not self.enabled:
            return
        try:
            wandb.log(metrics, step=step)
        except Exception as e:
            self.logger.error(f"Error logging metrics: {e}")

    def log_iteration(self, record: "IterationRecord"):
        """Per-iteration difference norms and flux-control factors."""
        metrics = {
            "iter/composite": record.composite,
            "iter/sup_l12": record.diff_sup_l12,
            "iter/trace_v1": record.diff_trace_v1,
            "iter/trace_vbr": record.diff_trace_vbr,
            "iter/norm": record.iterate_norm,
        }
        if record.ratio is not None:
            metrics["iter/ratio"] = record.ratio
        if record.s_left is not None:
            metrics["iter/s_left"] = record.s_left
            metrics["iter/s_right"] = record.s_right
        self.log_metrics(metrics, step=record.iteration)

    def log_summary(self, report: "IterationReport"):
        if not self.enabled:
            return
        try:
            summary = {
                "final/termination": report.termination.value,
                "final/iterations": report.iterations,
                "final/omega_all_pass": report.omega_all_pass,
                "final/residual": report.residual,
                "final/flux_constancy": report.flux_constancy,
            }
            if report.contraction is not None:
                summary["final/contraction_rate"] = report.contraction.rate
            for key, value in summary.items():
                if value is not None:
                    self.run.summary[key] = value
        except Exception as e:
            self.logger.error(f"Error logging run summary: {e}")

    def finish(self, exit_code: int = 0):
        """Clean up WandB integration."""
        if self.run:
            try:
                self.run.finish(exit_code=exit_code)
                self.logger.info("WandB run finished successfully")
            except Exception as e:
                self.logger.warning(f"Error finishing WandB run: {e}")
            finally:
                self.run = None
        self.enabled = False
