"""
Error handling utilities for esbgk-slab.
Provides the solver exception hierarchy, logging setup and user-facing error messages.
"""

import functools
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Any, Callable, Dict, Optional


class SolverError(Exception):
    """Base class for every error raised by the solver stack."""


class ConfigurationError(SolverError, ValueError):
    """Invalid grid, parameter or boundary configuration."""


class ContractViolation(SolverError, ValueError):
    """Array arguments do not match the grids they are declared on."""


class DegenerateDataError(SolverError):
    """Data with zero or negative mass where a positive density is required."""

    def __init__(self, message: str, node: Optional[int] = None):
        super().__init__(message)
        self.node = node


class TensorDegeneracyError(SolverError):
    """Temperature tensor with smallest eigenvalue below the positivity floor."""

    def __init__(self, message: str, lambda_min: float, node: Optional[int] = None):
        super().__init__(message)
        self.lambda_min = lambda_min
        self.node = node


class HypothesisViolationError(SolverError):
    """A hypothesis of the existence theory failed during the iteration."""

    def __init__(self, message: str, iteration: Optional[int] = None, node: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration
        self.node = node


class NumericalFailureError(SolverError):
    """Non-finite values or a non-convergent inner solve."""


class InternalConsistencyError(SolverError):
    """A self-check on computed quantities failed."""


class ErrorHandler:
    """Centralized logging and error reporting for the command line tools."""

    def __init__(self, log_file: Optional[str] = None, verbose: bool = False):
        self.logger = logging.getLogger(__name__)
        self.setup_logging(log_file, verbose)

    def setup_logging(self, log_file: Optional[str] = None, verbose: bool = False):
        """
        Setup logging configuration.

        Args:
            log_file: Optional log file path
            verbose: Show DEBUG records on the console
        """
        if log_file:
            Path(log_file).parent.mkdir(parents=True, exist_ok=True)

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
        console_handler.setFormatter(formatter)

        handlers = [console_handler]
        if log_file:
            file_handler = logging.FileHandler(log_file)
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            handlers.append(file_handler)

        logging.basicConfig(
            level=logging.DEBUG,
            handlers=handlers,
            force=True
        )

    def handle_exception(self, exc_type, exc_value, exc_traceback):
        """
        Handle uncaught exceptions.

        Args:
            exc_type: Exception type
            exc_value: Exception value
            exc_traceback: Exception traceback
        """
        if issubclass(exc_type, KeyboardInterrupt):
            sys.__excepthook__(exc_type, exc_value, exc_traceback)
            return

        traceback_str = ''.join(traceback.format_exception(exc_type, exc_value, exc_traceback))
        self.logger.error(f"Uncaught exception: {exc_value}\n{traceback_str}")

    def log_error(self, error: Exception, context: str = ""):
        """
        Log an error with context.

        Args:
            error: Exception object
            context: Context information
        """
        error_msg = f"{context}: {error}" if context else str(error)
        self.logger.error(error_msg)
        self.logger.debug(traceback.format_exc())

    def get_user_friendly_message(self, error: Exception, context: str = "") -> str:
        """
        Convert technical error to user-friendly message.

        Args:
            error: Exception object
            context: Context information

        Returns:
            User-friendly error message
        """
        error_str = str(error)

        if isinstance(error, TensorDegeneracyError):
            where = f" at spatial node {error.node}" if error.node is not None else ""
            return (f"Temperature tensor lost positivity{where} "
                    f"(smallest eigenvalue {error.lambda_min:.3e}): {error_str}")

        elif isinstance(error, HypothesisViolationError):
            where = f" at iteration {error.iteration}" if error.iteration is not None else ""
            return f"Smallness hypotheses violated{where}: {error_str}"

        elif isinstance(error, DegenerateDataError):
            return f"Degenerate data: {error_str}"

        elif isinstance(error, NumericalFailureError):
            return f"Numerical failure: {error_str}. Try a finer grid or a larger tau."

        elif isinstance(error, ContractViolation):
            return f"Array shape mismatch: {error_str}"

        elif isinstance(error, ConfigurationError):
            return f"Configuration error: {error_str}"

        elif isinstance(error, FileNotFoundError):
            return f"Required file not found: {error.filename or error_str}"

        elif isinstance(error, PermissionError):
            return "Permission denied. Please check file/directory permissions."

        elif isinstance(error, json.JSONDecodeError):
            return f"Invalid JSON: {error.msg} (line {error.lineno}, column {error.colno})"

        elif isinstance(error, ImportError):
            missing_module = getattr(error, "name", None) or "unknown"
            return f"Missing required dependency: {missing_module}. Please install it with pip."

        elif type(error).__name__ == "ValidationError":
            return f"Configuration validation failed: {error_str}"

        if context:
            return f"{context} failed: {error_str}"
        return f"Error: {error_str}"

    def wrap_with_error_handling(self, func: Callable, context: str = "") -> Callable:
        """
        Decorator to log and re-raise errors from func.

        Args:
            func: Function to wrap
            context: Context for error reporting

        Returns:
            Wrapped function
        """
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                self.log_error(e, context or func.__name__)
                raise
        return wrapper

    def safe_execute(self, func: Callable, context: str = "", default_return=None):
        """
        Safely execute a function with error handling.

        Args:
            func: Function to execute
            context: Context for error reporting
            default_return: Default return value on error

        Returns:
            Function result or default_return on error
        """
        try:
            return func()
        except Exception as e:
            self.log_error(e, context)
            return default_return

    def validate_system_requirements(self) -> tuple[bool, list[str]]:
        """
        Validate system requirements.

        Returns:
            tuple[bool, list[str]]: (all_valid, error_messages)
        """
        errors = []

        if sys.version_info < (3, 11):
            errors.append(
                f"Python 3.11+ required, found {sys.version_info.major}.{sys.version_info.minor}"
            )

        required_modules = [
            ('numpy', 'NumPy'),
            ('scipy', 'SciPy'),
            ('pydantic', 'Pydantic'),
            ('tqdm', 'tqdm'),
        ]
        for module_name, display_name in required_modules:
            try:
                __import__(module_name)
            except ImportError:
                errors.append(f"Missing required module: {display_name}")

        return len(errors) == 0, errors

    def create_crash_report(self, error: Exception, config: Optional[Dict[str, Any]] = None) -> str:
        """
        Create a detailed crash report.

        Args:
            error: Exception that caused the crash
            config: Optional configuration data

        Returns:
            Formatted crash report
        """
        import platform

        report_lines = [
            "=" * 60,
            "ESBGK-SLAB CRASH REPORT",
            "=" * 60,
            f"Platform: {platform.platform()}",
            f"Python: {platform.python_version()}",
            "",
            "ERROR INFORMATION:",
            f"Type: {type(error).__name__}",
            f"Message: {error}",
            "",
            "TRACEBACK:",
            ''.join(traceback.format_exception(type(error), error, error.__traceback__)),
        ]

        for attr in ("iteration", "node", "lambda_min"):
            value = getattr(error, attr, None)
            if value is not None:
                report_lines.append(f"{attr}: {value}")

        if config:
            report_lines.extend([
                "",
                "CONFIGURATION:",
                json.dumps(config, indent=2, default=str),
            ])

        report_lines.append("=" * 60)
        return "\n".join(report_lines)


# Global error handler instance
_error_handler: Optional[ErrorHandler] = None


def get_error_handler() -> ErrorHandler:
    """Get the global error handler instance."""
    global _error_handler
    if _error_handler is None:
        _error_handler = ErrorHandler()
    return _error_handler


def setup_global_error_handling(log_file: Optional[str] = None, verbose: bool = False) -> ErrorHandler:
    """
    Setup global error handling.

    Args:
        log_file: Optional log file path
        verbose: Show DEBUG records on the console
    """
    global _error_handler
    _error_handler = ErrorHandler(log_file, verbose)
    sys.excepthook = _error_handler.handle_exception
    return _error_handler
