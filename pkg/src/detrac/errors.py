"""Exception hierarchy shared across the package."""


class DetracError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DetracError):
    """Invalid input data: missing files, malformed manifests, bad shapes."""


class FormatError(DataError):
    """A binary blob failed validation (magic, version, truncation, ranges)."""


class TrainingDiverged(DetracError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
