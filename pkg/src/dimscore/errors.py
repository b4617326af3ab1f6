"""Exception types shared across the package.

Grouped so the CLI can map failures onto its exit-code contract:
input/data problems exit 2, numeric aborts exit 3, check failures exit 1.
"""


class DimscoreError(Exception):
    """Base class for all package errors."""


class ShapeError(DimscoreError, ValueError):
    """Operands have incompatible shapes; message names both."""


class DomainError(DimscoreError, ValueError):
    """Input outside an operation's mathematical domain."""


class UsageError(DimscoreError, ValueError):
    """API misuse: bad argument combination, non-scalar backward root, ..."""


class ConfigError(DimscoreError, ValueError):
    """Invalid configuration value or unknown preset."""


class DataError(DimscoreError, ValueError):
    """Corpus/record content violates the schema or the rubric."""


class SchemaError(DataError):
    """CSV header or file structure is wrong."""


class CheckpointError(DimscoreError):
    """Base for checkpoint load/save failures."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint written by an incompatible format version."""


class CorruptionError(CheckpointError):
    """Checkpoint payload does not match its header (truncation, bit flips)."""


class NumericAbort(DimscoreError, RuntimeError):
    """Training hit a non-finite loss; message names batch and step."""
