"""Exception types raised across the package."""


class MOABError(Exception):
    """Base class for all package errors."""


class DimensionError(MOABError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(MOABError, ValueError):
    """A hyperparameter is outside its valid range."""


class DataError(MOABError, ValueError):
    """Labels or class indices are out of range."""


class StateError(MOABError, RuntimeError):
    """An object was used in the wrong lifecycle state."""


class ContractError(MOABError, ValueError):
    """A padded vector of the wrong kind was given to an outer operator."""


class FormatError(MOABError, ValueError):
    """A dataset file does not follow its on-disk format."""


class SplitError(MOABError, ValueError):
    """A train/test split cannot be formed."""


class UndefinedMetricError(MOABError, ValueError):
    """A metric was requested on an empty confusion matrix."""


class ConfigError(MOABError, ValueError):
    """A run configuration is invalid."""


class TrainingError(MOABError, RuntimeError):
    """Training diverged."""


class FileError(MOABError, OSError):
    """Reading or writing an artifact file failed."""
