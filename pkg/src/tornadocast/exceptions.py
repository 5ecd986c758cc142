"""Exception hierarchy. Each class maps to one CLI exit code."""


class TornadocastError(Exception):
    exit_code = 1


class DataError(TornadocastError):
    """Missing or unreadable input, bad rows, unusable data."""

    exit_code = 2


class SchemaError(TornadocastError):
    """Column, shape or feature-count mismatch."""

    exit_code = 3


class DivergenceError(TornadocastError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
