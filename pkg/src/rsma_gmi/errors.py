"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class OptimizationError(RuntimeError):
    """The optimizer could not produce any usable solution."""


class ConfigError(ValueError):
    """A configuration file or field is malformed.

    ``line`` is the 1-based line number in the source text when known.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
