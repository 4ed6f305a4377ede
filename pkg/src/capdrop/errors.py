"""Exception hierarchy shared by all modules.

Every error raised on purpose by the library derives from :class:`CapdropError`
so callers (the CLI in particular) can map failures to exit codes.
"""


class CapdropError(Exception):
    """Base class of all library errors."""


class InvalidArgument(CapdropError, ValueError):
    """A precondition on the arguments was violated."""


class DomainDegenerate(CapdropError):
    """The surface is not star-shaped with the required margin."""


class ConvergenceFailure(CapdropError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class RangeViolation(CapdropError):
    """Right-hand side outside the range of a singular linear block."""

    def __init__(self, message, defect=float("nan")):
        super().__init__(message)
        self.defect = defect


class NotSimple(CapdropError):
    """The resonance at the requested mode is not a simple eigenvalue."""


class ContinuationFailure(ConvergenceFailure):
    """Newton continuation stalled; ``branch`` holds the points accepted so far."""

    def __init__(self, message, branch=None):
        super().__init__(message)
        self.branch = branch
