"""Exception hierarchy shared by every module.

The CLI maps :class:`InputError` to exit code 2 and
:class:`NumericalError` / :class:`ResourceError` to exit code 3.
"""


class KadError(Exception):
    """Base class for all toolkit errors."""


class InputError(KadError, ValueError):
    """Invalid user input: shapes, file contents, parameters."""


class DegenerateBandwidthError(InputError):
    """The median heuristic produced a zero bandwidth."""


class NumericalError(KadError, ArithmeticError):
    """A linear-algebra routine failed or produced out-of-tolerance values."""


class ResourceError(KadError):
    """A computation could not allocate the memory it needs."""
