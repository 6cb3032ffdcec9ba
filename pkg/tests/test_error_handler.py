import logging

import pytest

from esbgk_slab.error_handler import (
    ConfigurationError,
    DegenerateDataError,
    ErrorHandler,
    HypothesisViolationError,
    NumericalFailureError,
    SolverError,
    TensorDegeneracyError,
)


@pytest.fixture
def handler(tmp_path):
    return ErrorHandler(log_file=str(tmp_path / "logs" / "run.log"))


def test_hierarchy():
    assert issubclass(ConfigurationError, ValueError)
    for cls in (ConfigurationError, DegenerateDataError, TensorDegeneracyError,
                HypothesisViolationError, NumericalFailureError):
        assert issubclass(cls, SolverError)


def test_log_file_receives_debug_records(handler, tmp_path):
    logging.getLogger("esbgk_slab.test").debug("fine detail")
    for h in logging.getLogger().handlers:
        h.flush()
    assert "fine detail" in (tmp_path / "logs" / "run.log").read_text(encoding="utf-8")


@pytest.mark.parametrize(
    "error, fragment",
    [
        (TensorDegeneracyError("bad", lambda_min=-1e-3, node=4), "at spatial node 4"),
        (HypothesisViolationError("S <= 0", iteration=7), "at iteration 7"),
        (DegenerateDataError("zero mass"), "Degenerate data"),
        (NumericalFailureError("nan"), "finer grid"),
        (ConfigurationError("nu"), "Configuration error"),
        (RuntimeError("other"), "solve failed"),
    ],
)
def test_user_friendly_messages(handler, error, fragment):
    assert fragment in handler.get_user_friendly_message(error, "solve")


def test_crash_report_lists_error_attributes(handler):
    try:
        raise HypothesisViolationError("flux control", iteration=3, node=1)
    except HypothesisViolationError as e:
        report = handler.create_crash_report(e, {"nu": 0.0})
    assert "HypothesisViolationError" in report
    assert "iteration: 3" in report
    assert "node: 1" in report
    assert '"nu": 0.0' in report


def test_safe_execute_returns_default(handler):
    def fail():
        raise NumericalFailureError("nan")

    assert handler.safe_execute(fail, "plot", default_return=-1) == -1
    wrapped = handler.wrap_with_error_handling(fail, "sweep point")
    with pytest.raises(NumericalFailureError):
        wrapped()


def test_wrapped_failure_is_logged_with_context(handler, caplog):
    def fail():
        raise ConfigurationError("tau must be positive")

    wrapped = handler.wrap_with_error_handling(fail, "Sweep point tau=-5")
    with caplog.at_level(logging.ERROR):
        with pytest.raises(ConfigurationError):
            wrapped()
    assert "Sweep point tau=-5: tau must be positive" in caplog.text


def test_system_requirements_report_missing_modules(handler, monkeypatch):
    ready, problems = handler.validate_system_requirements()
    assert ready and problems == []

    real_import = __import__

    def no_tqdm(name, *args, **kwargs):
        if name == "tqdm":
            raise ImportError(name)
        return real_import(name, *args, **kwargs)

    monkeypatch.setattr("builtins.__import__", no_tqdm)
    ready, problems = handler.validate_system_requirements()
    assert not ready
    assert problems == ["Missing required module: tqdm"]
