"""Exception types shared across the package.

Invalid arguments raise the builtin ``ValueError``; the classes here cover
the two remaining failure classes the CLI maps to distinct exit codes.
"""


class HivekvError(Exception):
    """Base class for package-specific errors."""


class StateError(HivekvError, RuntimeError):
    """An operation was called while its object is in the wrong state."""


class InvariantError(HivekvError, AssertionError):
    """A structural invariant of the cache or a report was violated."""
