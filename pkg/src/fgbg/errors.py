"""Exception hierarchy; each class maps to a distinct CLI exit code."""


class FgbgError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(FgbgError):
    """Invalid configuration, CLI arguments or spec files."""

    exit_code = 3


class DataError(FgbgError):
    """Bad manifests, unreadable images, missing or out-of-bounds annotations."""

    exit_code = 4


class NoBoxesError(DataError):
    """An operation that requires box annotations got a sample without any."""


class ShapeMismatchError(FgbgError):
    """Tensor/category shapes do not compose (named offender in the message)."""

    exit_code = 5


class DivergenceError(FgbgError):
    """Non-finite loss or gradients: training halts loudly."""

    exit_code = 6


class StageError(FgbgError):
    """A pipeline stage failed; completed artifacts are preserved."""

    exit_code = 7

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
