"""Exception types raised across the package."""


class PadlabError(Exception):
    """Base class for all library errors."""


class DimensionError(PadlabError, ValueError):
    """A channel count or grid extent is zero, negative or inconsistent."""


class ShapeError(PadlabError, ValueError):
    """Operands do not fit together (channel mismatch, kernel too large, ...)."""


class UnsupportedError(PadlabError, ValueError):
    """The requested combination is outside what the operation handles."""


class StageError(PadlabError, ValueError):
    """A pipeline stage failed; ``stage`` is its index in the network."""

    def __init__(self, stage: int, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


class DegenerateDesignError(PadlabError, ValueError):
    """Normal equations are singular."""


class ScheduleError(PadlabError, ValueError):
    """Invalid scale schedule."""
