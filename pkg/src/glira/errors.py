"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid sizes, hyperparameters or configuration values."""


class ShapeError(ValueError):
    """Array dimensions do not match what the operation expects."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss appeared during optimisation."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"loss became non-finite at step {step}")


class MissingArtifact(RuntimeError):
    """A pipeline stage needs an artifact an earlier stage did not produce."""
