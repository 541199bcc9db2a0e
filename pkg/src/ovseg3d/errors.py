"""Exception types shared across the package.

Plain ``ValueError`` is used for bad arguments; the classes here mark
conditions callers may want to catch and handle individually.
"""


class OvsegError(Exception):
    """Base class for pipeline-specific failures."""


class EmptyCloudError(OvsegError):
    """Accumulation produced no valid points (e.g. all depths invalid)."""


class DuplicateLabelError(ValueError):
    """A prompt list contains the same label twice after case-folding."""


class DegenerateFusionError(OvsegError):
    """Feature fusion collapsed to a zero vector (e.g. antipodal features)."""


class ManifestError(OvsegError):
    """A dataset manifest is malformed or references missing files."""


class MissingArtifactError(OvsegError):
    """A staged command needs an upstream artifact that does not exist."""


class StageError(OvsegError):
    """A pipeline stage failed; carries the stage name for CLI reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
