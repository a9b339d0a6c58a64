"""Exception types shared across the package.

The split mirrors the command line contract: bad inputs (schema, config,
degenerate data) raise :class:`ValidationError`, breakdowns inside the
numerics (no sign change, empty risk sets, singular slope) raise
:class:`NumericError`.
"""


class RankAftError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RankAftError, ValueError):
    """Invalid input data, schema, or configuration."""


class NumericError(RankAftError, RuntimeError):
    """A numeric procedure failed on otherwise valid input."""


class EmptyRiskSetError(NumericError):
    """Risk set weight at a requested point is below the usable floor."""


class SolverError(NumericError):
    """Root search failed (no sign change, iteration cap, degenerate data)."""


class SingularSlopeError(NumericError):
    """Finite-difference slope matrix is singular or unusable."""
