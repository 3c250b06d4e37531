"""Exception types shared across the package."""


class ImbdetError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ImbdetError, ValueError):
    """An argument violates an operation's preconditions."""


class InvalidConfigError(ImbdetError, ValueError):
    """A configuration value is out of range or inconsistent."""


class ZeroFrequencyError(InvalidConfigError):
    """A class frequency of zero makes an inverse weighting scheme undefined."""

    def __init__(self, class_name: str):
        super().__init__(f"class {class_name!r} has zero frequency")
        self.class_name = class_name


class ZeroCountError(InvalidConfigError):
    """A class count of zero makes the effective-number scheme undefined."""

    def __init__(self, class_name: str):
        super().__init__(f"class {class_name!r} has zero count")
        self.class_name = class_name


class ParseError(ImbdetError, ValueError):
    """A label document is malformed; carries the offending record index."""

    def __init__(self, message: str, record_index: int | None = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class EmptyDatasetError(ImbdetError, ValueError):
    """A label source produced no scenes."""


class GenerationError(ImbdetError, RuntimeError):
    """Synthetic box placement failed after bounded retries."""


class EmptyForegroundError(ImbdetError, ValueError):
    """A batch offered for mining contains no foreground proposals."""


class DivergenceError(ImbdetError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
