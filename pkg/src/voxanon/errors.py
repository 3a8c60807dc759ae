"""Exception hierarchy shared by all voxanon modules."""


class VoxanonError(Exception):
    """Base class for every error raised by the package."""


class FormatError(VoxanonError):
    """Malformed container or file layout."""


class UnsupportedError(VoxanonError):
    """Well-formed input using a codec or variant we do not handle."""


class InputTooShort(VoxanonError):
    pass


class ConfigError(VoxanonError, ValueError):
    pass


class ShapeError(VoxanonError, ValueError):
    pass


class ProtocolError(VoxanonError):
    """Trial or evaluation protocol cannot be satisfied by the data."""


class NoTransitions(VoxanonError):
    pass


class NoVoicedFrames(VoxanonError):
    pass


class TrainingError(VoxanonError):
    pass


class ManifestError(VoxanonError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CoverageError(VoxanonError):
    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)
