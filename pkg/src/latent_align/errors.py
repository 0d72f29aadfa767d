"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage problems exit 1 (handled by the
argument parser), ``DataError`` exits 2, ``NumericalError`` exits 3.
"""


class LatentAlignError(Exception):
    """Base class for all toolkit errors."""


class DataError(LatentAlignError, ValueError):
    """Malformed, inconsistent, or contract-violating input data."""


class NumericalError(LatentAlignError, RuntimeError):
    """A numerical procedure failed (non-convergence, divergence, overflow)."""
