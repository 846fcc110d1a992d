"""Exception hierarchy shared across the package.

Each error class maps to a distinct CLI exit code so shell callers can
tell bad input (2) from numerical failure (3) from a broken backend
subprocess (4).
"""


class GtabError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(GtabError):
    """Malformed input: bundles, recipes, splits, CLI arguments."""

    exit_code = 2


class ComputeError(GtabError):
    """A numerical routine failed to converge or produced garbage."""

    exit_code = 3


class TransportError(GtabError):
    """A backend subprocess died, timed out, or spoke gibberish."""

    exit_code = 4
