"""
Exception hierarchy for SCANet.

Each error also derives from the closest builtin, so code that catches
ValueError / RuntimeError keeps working.
"""

from typing import Optional


class ScanetError(Exception):
    exit_code = 2


class DimensionError(ScanetError, ValueError):
    pass


class ConfigError(ScanetError, ValueError):
    pass


class NumericError(ScanetError, ArithmeticError):
    pass


class ContractError(ScanetError, RuntimeError):
    pass


class ArgumentError(ScanetError, ValueError):
    pass


class StratificationError(ScanetError, ValueError):
    pass


class UndefinedMetricError(ScanetError, ValueError):
    pass


class FormatError(ScanetError, ValueError):
    """Malformed study or checkpoint file; ``offset`` is the failing byte position."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class VerificationError(ScanetError, AssertionError):
    exit_code = 1


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ScanetError):
        return error.exit_code
    if isinstance(error, OSError):
        return 2
    return 1
