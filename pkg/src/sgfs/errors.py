"""Exception types raised by the solver stack."""


class SGFSError(Exception):
    """Base class for all package errors."""


class ZeroVolume(SGFSError):
    pass


class OutOfBase(SGFSError):
    pass


class EmptyMeasure(SGFSError):
    pass


class TooLarge(SGFSError):
    pass


class DegenerateSource(SGFSError):
    pass


class NoConvergence(SGFSError):
    """Iterative solve failed; ``best`` holds the best iterate, ``history`` any residual log."""

    def __init__(self, message, best=None, history=None):
        super().__init__(message)
        self.best = best
        self.history = history or []


class NoBracket(SGFSError):
    pass


class GaugeFailure(SGFSError):
    pass


class EmptyCell(SGFSError):
    pass


class MixedStratification(SGFSError):
    """Vertical coordinates of the particles do not share one strict sign."""


class ConfigError(SGFSError):
    pass


class StageFailure(SGFSError):
    """A time-integration stage could not be solved."""

    def __init__(self, message, stage, cause):
        super().__init__(message)
        self.stage = stage
        self.cause = cause
