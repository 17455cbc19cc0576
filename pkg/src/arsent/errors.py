"""Exception hierarchy. CLI exit codes hang off the base classes."""


class ArsentError(Exception):
    exit_code = 1


class UsageError(ArsentError):
    exit_code = 1


class ConfigError(ArsentError):
    exit_code = 1


class DataError(ArsentError):
    exit_code = 2


class MalformedRecordError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InputError(DataError):
    """Tensor input outside what a layer accepts (bad index, short sequence)."""


class SequenceTooShortError(InputError):
    pass


class CannotExplainError(DataError):
    pass


class NumericError(ArsentError):
    exit_code = 3


class RankDeficiencyError(NumericError):
    pass
