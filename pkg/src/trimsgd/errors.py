"""Exception hierarchy shared by all modules."""


class TrimSGDError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(TrimSGDError, ValueError):
    pass


class GeometryError(TrimSGDError, ValueError):
    pass


class LabelError(TrimSGDError, ValueError):
    pass


class FormatError(TrimSGDError, ValueError):
    pass


class LengthError(TrimSGDError, ValueError):
    pass


class ConfigError(TrimSGDError, ValueError):
    pass


class ClockError(TrimSGDError, ValueError):
    pass


class InputError(TrimSGDError, ValueError):
    pass


class StateError(TrimSGDError, RuntimeError):
    pass


class InvariantError(TrimSGDError, AssertionError):
    pass


class DivergenceError(TrimSGDError, RuntimeError):
    def __init__(self, epoch, lr, what="loss"):
        super().__init__(f"non-finite {what} at epoch {epoch} (lr={lr!r})")
        self.epoch = epoch
        self.lr = lr


class AggregationError(TrimSGDError, ValueError):
    pass


class UsageError(TrimSGDError, ValueError):
    pass
