"""Builders for small boundary problems shared by the test modules."""

import numpy as np

from esbgk_slab.boundary import Regime, build_boundary_spec, drifting_maxwellian
from esbgk_slab.gaussian_closure import GaussianClosure, MacroFields
from esbgk_slab.solver_controller import SolverConfig


def discrete_gaussian(grid, rho=1.0, temperature=1.0, velocity=(0.0, 0.0, 0.0), nu=0.0):
    """Moment-matched Gaussian with the given moments and isotropic stress."""
    closure = GaussianClosure(grid, nu)
    macro = MacroFields.from_values(
        rho=np.array(rho),
        bulk_velocity=np.asarray(velocity, dtype=float),
        stress_tensor=temperature * np.eye(3),
    )
    return closure.gaussian(macro, closure.tensor(macro))


def two_temperature_spec(grid, delta=(1.0, 0.0, 0.0), t_left=1.0, t_right=1.2,
                         regime=Regime.INFLOW_DOMINANT, flux=0.5, wall=(1.0, 1.2)):
    """Half-space Maxwellians at rest with prescribed |v1|-fluxes at both walls."""
    return build_boundary_spec(
        grid,
        delta,
        wall,
        drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), t_left, side=0, flux=flux),
        drifting_maxwellian(grid, 1.0, (0.0, 0.0, 0.0), t_right, side=1, flux=flux),
        regime=regime,
    )


def equilibrium_spec(grid, values):
    """delta = (1, 0, 0) with both inflow slices cut from one global slice."""
    return build_boundary_spec(
        grid,
        (1.0, 0.0, 0.0),
        (1.0, 1.0),
        np.where(grid.positive, values, 0.0),
        np.where(grid.negative, values, 0.0),
    )


def make_config(grid, spatial, spec, nu=0.0, tau=100.0, **kwargs):
    return SolverConfig(nu=nu, kappa=tau / (1.0 - nu), spec=spec, velocity=grid,
                        spatial=spatial, **kwargs)
