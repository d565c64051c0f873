class SmartPurError(Exception):
    """Base class for errors raised by this package."""


class UndefinedRateError(SmartPurError, ValueError):
    """A rate was requested over an empty population."""


class TrainingError(SmartPurError, ValueError):
    """Training data cannot produce a model (e.g. a single class)."""


class ModelEvaluationError(SmartPurError, ValueError):
    """A model was evaluated on inputs it was not trained for."""


class ConfigError(SmartPurError, ValueError):
    """Invalid experiment configuration. ``path`` names the offending key."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DataError(SmartPurError, ValueError):
    """A dataset or model file does not match the expected schema."""
