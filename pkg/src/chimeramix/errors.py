"""Exception types shared across the package."""


class ChimeraMixError(Exception):
    """Base class for all package errors."""


class DatasetError(ChimeraMixError):
    """Malformed dataset file or violated dataset invariant."""


class ConfigError(ChimeraMixError):
    """Invalid configuration; message names the offending field path."""


class CheckpointError(ChimeraMixError):
    """Checkpoint file is malformed or does not match the current config."""


class TrainingDiverged(ChimeraMixError):
    """A loss became non-finite during training."""
