"""Exception hierarchy shared by every softshift module."""


class SoftShiftError(Exception):
    """Base class for all errors raised by softshift."""


class DimensionMismatch(SoftShiftError, ValueError):
    pass


class ShapeMismatch(SoftShiftError, ValueError):
    pass


class InvalidTemperature(SoftShiftError, ValueError):
    pass


class InvalidSpec(SoftShiftError, ValueError):
    pass


class InvalidConfig(SoftShiftError, ValueError):
    pass


class LabelOutOfRange(SoftShiftError, ValueError):
    pass


class InvalidTargets(SoftShiftError, ValueError):
    pass


class MissingClassSamples(SoftShiftError, ValueError):
    def __init__(self, cls):
        self.cls = cls
        super().__init__(cls)

    def __str__(self):
        return f"MissingClassSamples({self.cls})"


class TemperatureMismatch(SoftShiftError, ValueError):
    pass


class NonFiniteLoss(SoftShiftError, ArithmeticError):
    def __init__(self, epoch, batch, value):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")


class GridCellError(SoftShiftError):
    """Wraps a failure inside one grid cell; the original is ``cause``."""

    def __init__(self, cell, seed, cause):
        self.cell = cell
        self.seed = seed
        self.cause = cause
        super().__init__(f"grid cell {cell} seed {seed}: {type(cause).__name__}: {cause}")


class _CorruptFile(SoftShiftError, ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class CorruptCheckpoint(_CorruptFile):
    pass


class CorruptTable(_CorruptFile):
    pass


class CorruptDataset(_CorruptFile):
    pass


class FingerprintMismatch(UserWarning):
    """Issued (not raised) when a table was built from a different source model."""
