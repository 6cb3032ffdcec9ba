import csv
import json
import logging
import sys

import pytest

from esbgk_slab import cli, error_handler
from esbgk_slab.error_handler import ConfigurationError, ErrorHandler


@pytest.fixture(autouse=True)
def keep_excepthook(monkeypatch):
    monkeypatch.setattr(sys, "excepthook", sys.excepthook)


@pytest.fixture
def write_config(tmp_path):
    def write(**overrides):
        raw = {
            "model": {"nu": 0.0, "kappa": 100.0},
            "grid": {"cutoff": 6.0, "counts": [16, 16, 16], "spatial_intervals": 8},
            "solver": {"tol": 1e-9, "max_iter": 50},
            "output": {"directory": str(tmp_path / "out")},
            "verify": {
                "moment_samples": 3,
                "tensor_samples": 10,
                "identity_fields": 3,
                "identity_directions": 3,
                "moment_counts": [32, 32, 32],
                "contraction_iterations": 4,
            },
        }
        for section, values in overrides.items():
            raw.setdefault(section, {}).update(values)
        path = tmp_path / "run.json"
        path.write_text(json.dumps(raw), encoding="utf-8")
        return path

    return write


def test_solve_writes_outputs(write_config, tmp_path, capsys):
    path = write_config()
    code = cli.main(["solve", "--config", str(path), "--plot", "--dump-field"])
    assert code == cli.EXIT_OK
    out = tmp_path / "out"
    assert {"report.json", "profile.csv", "profile.png", "field.npz"} <= {p.name for p in out.iterdir()}
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["termination"] == "converged"
    assert "converged:" in capsys.readouterr().out


def test_solve_out_dir_override(write_config, tmp_path):
    path = write_config()
    target = tmp_path / "elsewhere"
    assert cli.main(["solve", "--config", str(path), "--out-dir", str(target)]) == cli.EXIT_OK
    assert (target / "report.json").exists()


def test_iteration_limit_exit_code(write_config):
    path = write_config(solver={"tol": 1e-15, "max_iter": 1})
    assert cli.main(["solve", "--config", str(path)]) == cli.EXIT_MAX_ITER


def test_configuration_errors_exit_with_one(write_config, tmp_path, capsys):
    path = write_config(model={"nu": 1.0})
    assert cli.main(["solve", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "Configuration error" in capsys.readouterr().err
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_sweep_runs_serially(write_config, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.MAX_WORKERS_ENV, "1")
    path = write_config()
    code = cli.main(["sweep", "--config", str(path), "--axis", "tau", "--values", "50,100"])
    assert code == cli.EXIT_OK
    with open(tmp_path / "out" / "sweep.csv", newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [float(r["value"]) for r in rows] == [50.0, 100.0]
    assert all(r["converged"] == "true" for r in rows)
    assert "2/2 runs converged" in capsys.readouterr().out


def test_sweep_rejects_bad_input(write_config):
    path = write_config()
    assert cli.main(["sweep", "--config", str(path), "--axis", "tau",
                     "--values", "a,b"]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--config", str(path), "--axis", "delta",
                     "--values", "0.5,1.5"]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        cli.main(["sweep", "--config", str(path), "--axis", "kappa", "--values", "1"])


def test_sweep_point_failure_becomes_a_row(write_config):
    path = write_config()
    run = cli.ConfigManager().load_config(path)
    row = cli._sweep_run((run.model_dump(mode="json"), str(path.parent), "tau", -5.0))
    assert row["converged"] is False
    assert row["termination"] == "error:ConfigurationError"


def test_max_workers(monkeypatch):
    monkeypatch.setenv(cli.MAX_WORKERS_ENV, "3")
    assert cli.max_workers(10) == 3
    assert cli.max_workers(2) == 2
    monkeypatch.setenv(cli.MAX_WORKERS_ENV, "0")
    with pytest.raises(ConfigurationError):
        cli.max_workers(4)
    monkeypatch.setenv(cli.MAX_WORKERS_ENV, "many")
    with pytest.raises(ConfigurationError):
        cli.max_workers(4)


def test_parse_values():
    assert cli.parse_values("1, 2.5,") == [1.0, 2.5]
    with pytest.raises(ConfigurationError):
        cli.parse_values(" , ")


def test_lemma_check(capsys):
    assert cli.main(["lemma-check", "--tau-list", "10,100,1000"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "kernel_estimate" in out and "PASS" in out
    assert cli.main(["lemma-check", "--tau-list", "0.5,10"]) == cli.EXIT_CONFIG
    assert cli.main(["lemma-check", "--tau-list", "10", "--decay", "0"]) == cli.EXIT_CONFIG


def test_verify_small_battery(write_config, capsys):
    path = write_config()
    assert cli.main(["verify", "--config", str(path), "--seed", "7"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    for name in ("moment_consistency", "equivalence_bounds", "critical_identity",
                 "kernel_estimate", "contraction", "relaxation_closure"):
        assert name in out


def test_unmet_requirements_exit_with_one(write_config, monkeypatch, capsys):
    monkeypatch.setattr(ErrorHandler, "validate_system_requirements",
                        lambda self: (False, ["Missing required module: SciPy"]))
    path = write_config()
    assert cli.main(["solve", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "Missing required module: SciPy" in capsys.readouterr().err
    assert not (path.parent / "out").exists()


def _read_log(path):
    for h in logging.getLogger().handlers:
        h.flush()
    return path.read_text(encoding="utf-8")


def test_plot_failure_does_not_fail_the_solve(write_config, tmp_path, monkeypatch):
    def broken_plot(self, path, table):
        raise RuntimeError("no display backend")

    monkeypatch.setattr(cli.FileManager, "plot_profile", broken_plot)
    path = write_config()
    log = tmp_path / "run.log"
    code = cli.main(["--log-file", str(log), "solve", "--config", str(path), "--plot"])
    assert code == cli.EXIT_OK
    out = tmp_path / "out"
    assert (out / "profile.csv").exists()
    assert not (out / "profile.png").exists()
    assert "Profile plot: no display backend" in _read_log(log)


def test_solve_output_is_reproducible(write_config, tmp_path):
    path = write_config()
    first, second = tmp_path / "first", tmp_path / "second"
    assert cli.main(["solve", "--config", str(path), "--out-dir", str(first)]) == cli.EXIT_OK
    assert cli.main(["solve", "--config", str(path), "--out-dir", str(second)]) == cli.EXIT_OK
    assert (first / "profile.csv").read_bytes() == (second / "profile.csv").read_bytes()


def test_invalid_sweep_point_config_becomes_a_row(write_config, tmp_path, monkeypatch):
    log = tmp_path / "sweep.log"
    monkeypatch.setattr(error_handler, "_error_handler", ErrorHandler(log_file=str(log)))
    path = write_config()
    raw = cli.ConfigManager().load_config(path).model_dump(mode="json")
    raw["model"]["kappa"] = -1.0
    row = cli._sweep_run((raw, str(path.parent), "tau", 50.0))
    assert row["converged"] is False
    assert row["termination"] == "error:ValidationError"
    assert "Sweep point tau=50.0" in _read_log(log)
