# thalassa/errors.py - Exception hierarchy shared by every module

"""
Thalassa exceptions.

Every error carries an ``exit_code`` so the CLI can map it without a lookup
table: 1 for problems with the user's input, 2 for numerical or internal
failures.
"""

from typing import Optional


class ThalassaError(Exception):
    """Base class for all Thalassa errors"""

    exit_code: int = 1


class ConfigError(ThalassaError, ValueError):
    pass


class PersistenceError(ThalassaError):
    pass


# --- profiles ---

class ProfileParseError(ThalassaError, ValueError):
    """Malformed profile CSV. ``line`` is the 1-based file line."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class ProfileValidationError(ThalassaError, ValueError):
    pass


class EmptyProfileSetError(ThalassaError, ValueError):
    pass


class GridError(ThalassaError, ValueError):
    pass


class GridMismatchError(ThalassaError, ValueError):
    pass


# --- eof ---

class DegenerateBasisError(ThalassaError, ValueError):
    pass


class DimensionMismatchError(ThalassaError, ValueError):
    pass


# --- forward / synth ---

class GeometryError(ThalassaError, ValueError):
    pass


class MeasurementError(ThalassaError, ValueError):
    pass


class EmptyMeasurementError(MeasurementError):
    pass


class MeasurementParseError(MeasurementError):
    """Malformed measurement CSV. ``row`` is the 1-based file row."""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")


class SynthSpecError(ThalassaError, ValueError):
    pass


# --- invert ---

class AllBeamsTurnedError(ThalassaError):
    exit_code = 2


class InversionError(ThalassaError):
    exit_code = 2


class NonFiniteCostError(InversionError):
    pass


class JacobianError(InversionError):
    pass


class NoConvergedInversionError(InversionError):
    pass


# --- alphasel ---

class AlphaNetError(ThalassaError, ValueError):
    pass


class TrainingDivergedError(ThalassaError):
    exit_code = 2


class InsufficientExamplesError(ThalassaError, ValueError):
    pass
