"""Exception hierarchy shared by the solver, optimizer and CLI."""


class CHBError(Exception):
    """Base class for all errors raised by :mod:`chb`."""


class GridMismatch(CHBError, ValueError):
    pass


class AssumptionViolation(CHBError):
    """A modelling hypothesis failed its numerical check.

    ``label`` carries the hypothesis name (``"H3"`` etc.).
    """

    def __init__(self, label, message):
        super().__init__(f"{label}: {message}")
        self.label = label


class SolverDiverged(CHBError):
    pass


class BlowUp(CHBError):
    pass


class TrajectoryMismatch(CHBError, ValueError):
    pass


class BoundsInverted(CHBError, ValueError):
    pass


class LineSearchStalled(CHBError):
    pass


class ConfigError(CHBError):
    def __init__(self, key, reason):
        super().__init__(f"{key} {reason}" if key else reason)
        self.key = key
        self.reason = reason


class FormatError(CHBError, ValueError):
    pass
