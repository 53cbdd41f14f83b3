"""Exception hierarchy shared by all stages.

Every error that aborts a pipeline stage derives from OrthofaceError so the
CLI can map it onto a stable exit code (config -> 1, I/O -> 2, stage -> 3).
"""


class OrthofaceError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(OrthofaceError):
    """An operation received arguments violating its preconditions."""


class ConfigError(OrthofaceError):
    """Configuration file failed to parse or validate."""


class ImageIOError(OrthofaceError):
    """An image file could not be read or written."""


class LocalizationFailureError(OrthofaceError):
    """Feature-window assignment failed; carries the candidate clusters."""

    def __init__(self, message, clusters=()):
        super().__init__(message)
        self.clusters = list(clusters)


class ExtractionFailureError(OrthofaceError):
    """Landmark extraction failed inside a named window."""

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window


class DegenerateHullError(OrthofaceError):
    """All hull input points are collinear; carries the two extreme points."""

    def __init__(self, message, endpoints=()):
        super().__init__(message)
        self.endpoints = tuple(endpoints)


class DegenerateInputError(OrthofaceError):
    """Geometric input admits no valid triangulation."""


class IllConditionedError(OrthofaceError):
    """A linear problem is singular or rank-deficient."""


class AssemblyError(OrthofaceError):
    """3D landmark assembly is missing required ids; carries the id list."""

    def __init__(self, message, ids=()):
        super().__init__(message)
        self.ids = sorted(ids)


class StageError(OrthofaceError):
    """A pipeline stage aborted; carries the stage name and a diagnostic payload."""

    def __init__(self, stage, message, payload=None):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.payload = payload
