class FormatError(ValueError):
    """A file does not match its container format (bad magic, header or row shape)."""


class ConsistencyError(ValueError):
    """Two inputs that must agree do not (counts, labels, lengths)."""


class TruncatedFileError(OSError):
    """A container ended before its declared payload."""


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(ValueError):
    """Invalid experiment configuration or command-line value."""
