"""Exception types shared across the package.

The command line maps these onto exit codes: configuration problems exit
with 2, numerical failures with 3, resource-guard refusals with 4.
"""


class PnrsimError(Exception):
    """Base class for all package errors."""


class ConfigError(PnrsimError):
    """Invalid user input: bad parameter values, malformed configs,
    unknown keys, inconsistent dimensions at the API boundary."""


class NumericsError(PnrsimError):
    """Numerical failure during integration or post-processing:
    step underflow, trace drift, unsettled final time."""


class ResourceLimitError(PnrsimError):
    """A build or run was refused because it exceeds a configured size
    guard. Guards can be raised explicitly; the error says how."""
