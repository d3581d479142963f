from __future__ import annotations


class HarvestError(Exception):
    """Base class for library errors."""


class DomainError(HarvestError, ValueError):
    """An argument lies outside the domain of an operation."""


class TruncationError(HarvestError):
    """A mode sum could not meet its tail tolerance within the hard caps."""


class OracleError(HarvestError):
    """A verification quadrature failed to converge."""
