"""Exception hierarchy. Every error is a ``ValueError`` so callers that only
care about bad input can catch one type."""


class QrsWaveError(ValueError):
    pass


class InvalidWaveletParameter(QrsWaveError):
    pass


class InvalidRange(QrsWaveError):
    pass


class ScaleRangeError(QrsWaveError):
    pass


class EmptyInputError(QrsWaveError):
    pass


class NumericalFailure(QrsWaveError):
    pass


class InsufficientResolution(QrsWaveError):
    pass


class ParseError(QrsWaveError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedFormat(QrsWaveError):
    pass


class TruncatedData(QrsWaveError):
    pass


class OrderingError(QrsWaveError):
    pass


class CalibrationError(QrsWaveError):
    pass


class IncompatibleInputs(QrsWaveError):
    pass
