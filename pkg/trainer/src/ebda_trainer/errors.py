"""Trainer exception hierarchy."""


class TrainerError(Exception):
    """Base class for everything this package raises on purpose."""


class FormatError(TrainerError):
    """Malformed EBDS dataset or MFMR weight file."""


class ConfigMismatchError(TrainerError):
    """Dataset, network config, and training config disagree."""
