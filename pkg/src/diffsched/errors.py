class DiffSchedError(Exception):
    pass


class UnknownConfiguration(DiffSchedError, KeyError):
    """Raised when a latency lookup falls outside the profile domain."""

    def __str__(self):
        return Exception.__str__(self)


class ParseError(DiffSchedError, ValueError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class SchemaError(DiffSchedError, ValueError):
    def __init__(self, missing, message=None):
        self.missing = list(missing)
        super().__init__(message or f"missing keys: {', '.join(self.missing)}")


class InvalidConfig(DiffSchedError, ValueError):
    """Out-of-range or inconsistent configuration. ``path`` names the field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SchedulerContractViolation(DiffSchedError, RuntimeError):
    """A scheduler returned a plan the engine refuses to apply."""


class EmptyResult(DiffSchedError, ValueError):
    pass
