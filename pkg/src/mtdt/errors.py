"""Shared exception types.

Everything raised on purpose by this package derives from ValueError so
callers can catch one family; the subclasses mark whose fault it was.
"""


class ShapeError(ValueError):
    """An array argument has the wrong shape or dtype-incompatible content."""


class ContractError(ValueError):
    """An argument violates a documented precondition (values, ordering, ranges)."""


class ConfigurationError(ValueError):
    """A config, topology or checkpoint file is internally inconsistent."""
