"""Exception types shared by the solvers and the command line."""


class SelError(Exception):
    """Base class for all package errors."""


class ParameterError(SelError, ValueError):
    """A parameter lies outside its admissible domain."""


class PreconditionError(SelError, ValueError):
    """An operation was called on input violating its precondition."""


class NumericalBlowupError(SelError, FloatingPointError):
    """Non-finite values appeared in a state.

    Attributes
    ----------
    cell : int
        First offending cell index.
    window : int or None
        Splitting window index, attached by the driver.
    """

    def __init__(self, message, cell, window=None):
        super().__init__(message)
        self.cell = cell
        self.window = window

    def __str__(self):
        base = super().__str__()
        if self.window is None:
            return f"{base} (cell {self.cell})"
        return f"{base} (cell {self.cell}, window {self.window})"


class PathExhaustedError(SelError, IndexError):
    """A Brownian path does not cover the requested time span."""


class AlignmentError(SelError, ValueError):
    """Series or trajectories do not share times or grids."""
