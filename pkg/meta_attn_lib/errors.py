class ConfigurationError(ValueError):
    """
    Invalid shapes, layouts, windows or experiment settings
    """


class ContractViolation(ValueError):
    """
    A caller broke an operation's precondition
    """


class NaNGradientError(FloatingPointError):
    def __init__(self, name: str, detail: str = ''):
        self.name = name
        message = f'non-finite gradient in parameter {name!r}'
        if detail:
            message += f': {detail}'
        super().__init__(message)


class CsvParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f'line {line}: {message}')
