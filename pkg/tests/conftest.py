import logging

import pytest

from esbgk_slab.quadrature import build_spatial_grid, build_velocity_grid


@pytest.fixture(autouse=True)
def restore_root_logging():
    """The CLI reconfigures the root logger; drop whatever handlers a test added."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
    root.setLevel(level)


@pytest.fixture(scope="session")
def grid():
    return build_velocity_grid(6.0, (12, 12, 12))


@pytest.fixture(scope="session")
def fine_grid():
    """Resolves unit-temperature Gaussians to about 1e-10."""
    return build_velocity_grid(7.0, (24, 24, 24))


@pytest.fixture(scope="session")
def spatial():
    return build_spatial_grid(16)
