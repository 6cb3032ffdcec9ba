import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from esbgk_slab.error_handler import ConfigurationError, ContractViolation
from esbgk_slab.file_manager import PROFILE_COLUMNS, SWEEP_COLUMNS, FileManager
from esbgk_slab.solver_controller import SolverResult, solve
from esbgk_slab.transport import DistributionField

from .helpers import make_config, two_temperature_spec


@pytest.fixture
def files():
    return FileManager()


@pytest.fixture(scope="module")
def solved(grid, spatial):
    config = make_config(grid, spatial, two_temperature_spec(grid), max_iter=3)
    return config, solve(config)


def test_atomic_write_leaves_no_temporaries(files, tmp_path):
    path = tmp_path / "deep" / "out.txt"
    files.write_text_atomic(path, "first")
    files.write_text_atomic(path, "second")
    assert path.read_text(encoding="utf-8") == "second"
    assert [p.name for p in path.parent.iterdir()] == ["out.txt"]


def test_profile_csv_keeps_full_precision(files, solved, tmp_path):
    _, result = solved
    table = files.profile_table(result)
    assert tuple(table) == PROFILE_COLUMNS
    path = tmp_path / "profile.csv"
    files.write_profile_csv(path, table)
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == ",".join(PROFILE_COLUMNS)
    loaded = files.read_profile_csv(path)
    for name in PROFILE_COLUMNS:
        assert_array_equal(loaded[name], np.asarray(table[name], dtype=float))


def test_profile_table_needs_a_profile(files, grid, spatial):
    field = DistributionField.constant(np.ones(grid.size), spatial, grid)
    with pytest.raises(ContractViolation):
        files.profile_table(SolverResult(field=field, report=None))


def test_read_profile_rejects_foreign_header(files, tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(ContractViolation):
        files.read_profile_csv(path)


def test_report_is_json(files, solved, tmp_path):
    config, result = solved
    path = tmp_path / "report.json"
    files.write_report(path, config, result)
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data["config"]["tau"] == pytest.approx(config.tau)
    assert data["termination"] == result.report.termination.value
    assert data["iterations"] == 3
    assert len(data["records"]) == 3
    assert {"omega_ledger", "contraction", "flux", "discrepancy", "constants"} <= set(data)


def test_dump_field(files, solved, tmp_path):
    _, result = solved
    path = tmp_path / "field.npz"
    files.dump_field(path, result)
    with np.load(path) as data:
        assert_array_equal(data["values"], result.field.values)
        assert_array_equal(data["velocity_weights"], result.field.velocity.weights)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["field.npz"]


def test_sweep_csv_cells(files, tmp_path):
    rows = [
        {"value": 0.5, "converged": True, "iterations": 12, "contraction_rate": 0.1,
         "min_eigenvalue": 0.9, "u1_max": 1e-3, "termination": "converged"},
        {"value": 2.0, "converged": False, "termination": "error:TensorDegeneracyError"},
    ]
    path = tmp_path / "sweep.csv"
    files.write_sweep_csv(path, rows)
    loaded = files.read_sweep_csv(path)
    assert list(loaded[0]) == list(SWEEP_COLUMNS)
    assert loaded[0]["converged"] == "true"
    assert float(loaded[0]["contraction_rate"]) == 0.1
    assert loaded[1]["converged"] == "false"
    assert loaded[1]["iterations"] == ""


def test_crash_report(files, tmp_path):
    path = files.write_crash_report(tmp_path / "out", "boom")
    assert path.name == "crash_report.txt"
    assert path.read_text(encoding="utf-8") == "boom"


def test_plot_profile(files, solved, tmp_path):
    _, result = solved
    path = tmp_path / "profile.png"
    assert files.plot_profile(path, files.profile_table(result))
    assert path.stat().st_size > 0


def test_load_boundary_file_errors(files, tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        files.load_boundary_file(tmp_path / "missing.json")
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="JSON object"):
        files.load_boundary_file(path)
