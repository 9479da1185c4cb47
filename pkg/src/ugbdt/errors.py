"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class UGBDTError(Exception):
    exit_code = 1


class ValidationError(UGBDTError, ValueError):
    """Bad parameters or configuration."""

    exit_code = 2


class DataError(UGBDTError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericError(UGBDTError, ArithmeticError):
    """Non-finite values produced during training or evaluation."""

    exit_code = 4
