"""Shared exception taxonomy.

Every failure the package raises deliberately is one of these, so callers
(and the CLI exit-code mapping) can tell usage mistakes from numeric faults
from bad input files.
"""


class AfgmError(Exception):
    """Base class for all deliberate errors raised by this package."""


class DimensionError(AfgmError):
    """Operand shapes are incompatible. Message names both shapes and the op."""


class ConfigError(AfgmError):
    """Invalid, contradictory, or unknown configuration."""


class DomainError(AfgmError):
    """An input left the mathematical domain of an operation (e.g. sqrt of a negative)."""


class NumericError(AfgmError):
    """A non-finite value (NaN/Inf) appeared. Message names the first offending op."""


class IngestionError(AfgmError):
    """A data file could not be parsed. Message cites row and column."""


class ContractError(AfgmError):
    """An internal API contract was violated (e.g. backward from a non-scalar)."""
