class DimsumError(Exception):
    pass


class SchemaError(DimsumError):
    pass


class CsvParseError(DimsumError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class CellTypeError(DimsumError):
    def __init__(self, column, line, text, expected):
        super().__init__(f"line {line}, column {column!r}: cannot parse {text!r} as {expected}")
        self.column = column
        self.line = line
        self.text = text


class SliceSpecError(DimsumError):
    pass


class NumericDomainError(DimsumError, ValueError):
    pass


class ConsistencyError(DimsumError):
    """Two inputs that must agree structurally do not."""


class WriteOnceError(DimsumError):
    pass


class PipelineError(DimsumError):
    pass


class BackendError(DimsumError):
    def __init__(self, message, attempts=0):
        super().__init__(message)
        self.attempts = attempts


class BackendUnavailable(BackendError):
    pass


class RequestRejected(BackendError):
    """Non-retryable 4xx answer."""


class BackendConfigError(BackendError):
    pass


class EchoError(BackendError):
    pass


class JudgeFormatError(DimsumError):
    pass
