"""Exception hierarchy shared across the package."""


class TfttsError(Exception):
    """Base class; ``kind`` is the machine-readable tag the CLI prints."""

    kind = "error"


class InvalidConfigError(TfttsError, ValueError):
    kind = "invalid-config"


class InvalidInputError(TfttsError, ValueError):
    kind = "invalid-input"


class InvalidStatsError(TfttsError, ValueError):
    kind = "invalid-stats"


class NumericalError(TfttsError, ArithmeticError):
    kind = "numerical"


class TrainingFailure(TfttsError, RuntimeError):
    kind = "training-failure"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UnsupportedFormatError(TfttsError, ValueError):
    kind = "unsupported-format"


class CorruptFileError(TfttsError, ValueError):
    kind = "corrupt-file"


class FormatError(TfttsError, ValueError):
    kind = "format"
