"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the CLI can map failures to distinct
process exit statuses without a lookup table.
"""


class ColonLocError(Exception):
    exit_code = 1


class DomainError(ColonLocError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = 3


class ShapeError(ColonLocError, ValueError):
    exit_code = 3


class GeometryError(ColonLocError):
    """Camera placement or projection is geometrically impossible."""

    exit_code = 4


class DegenerateError(ColonLocError, ValueError):
    """Input is too small or too degenerate to produce a result."""

    exit_code = 4


class NumericalError(ColonLocError, ArithmeticError):
    exit_code = 5


class DivergenceError(NumericalError):
    """Optimizer produced a non-finite loss.

    The last finite estimate is kept on ``last_params``.
    """

    def __init__(self, message, last_params=None):
        super().__init__(message)
        self.last_params = last_params


class ManifestError(ColonLocError):
    """Missing inputs or inconsistent run manifest / file streams."""

    exit_code = 2
