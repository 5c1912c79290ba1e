"""Exception types shared across the toolkit."""


class ExpleakError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(ExpleakError):
    """An input does not match the shape a model or operation expects."""


class UnsupportedLayerError(ExpleakError):
    """Operation requested on a layer kind that cannot support it."""


class UnsupportedArchitectureError(ExpleakError):
    """Model lacks a structural feature the explainer needs (e.g. a conv layer)."""


class TrainingDivergedError(ExpleakError):
    """Training loss became non-finite; carries the epoch index."""

    def __init__(self, epoch, message=None):
        super().__init__(message or f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class CsvFormatError(ExpleakError):
    """Malformed CSV input; the message names the offending row/column."""


class SplitError(ExpleakError):
    """Infeasible or inconsistent dataset split request."""


class SingularDesignError(ExpleakError):
    """Weighted regression design is singular; usually means too few samples."""


class UndefinedBaselineError(ExpleakError):
    """Percentage change requested against a zero baseline."""


class ConfigError(ExpleakError):
    """Invalid run configuration (maps to CLI exit code 2)."""
