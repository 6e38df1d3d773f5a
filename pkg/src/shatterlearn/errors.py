"""Shared exception types."""


class ShatterlearnError(Exception):
    """Base class for library errors."""


class GridError(ShatterlearnError, ValueError):
    """A value does not live on the required dyadic grid."""


class CapacityError(ShatterlearnError, RuntimeError):
    """An exhaustive search exceeded its configured cap."""


class RealizabilityError(ShatterlearnError, RuntimeError):
    """An input stream violated the realizability contract of a learner."""


class InvariantError(ShatterlearnError, AssertionError):
    """An asserted exact invariant failed at runtime."""
