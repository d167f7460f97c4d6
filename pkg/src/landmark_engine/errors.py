"""Error types shared across the engine.

Each class carries a distinct process exit code so the CLI can map failure
classes without string matching.
"""


class EngineError(Exception):
    """Base class for all engine failures."""

    exit_code = 1


class ValidationError(EngineError):
    """Bad values: config keys, dimensions, duplicate ids, infeasible setups."""

    exit_code = 2


class MissingArtifactError(EngineError):
    """An upstream stage artifact is absent. Message names the stage to run."""

    exit_code = 3

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class FormatError(EngineError):
    """A file on disk does not parse. Carries the byte offset where it broke."""

    exit_code = 4

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
