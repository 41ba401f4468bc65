"""Exception hierarchy shared across the package."""


class AiotSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(AiotSimError):
    """Scenario or command input is invalid."""


class ParseError(ConfigError):
    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.offset = offset
        self.line = line
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(message + where)


class DanglingReference(ConfigError):
    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"dangling reference: {name}" + (f" ({detail})" if detail else ""))


class InvariantViolation(ConfigError):
    pass
