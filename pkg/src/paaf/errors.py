"""Exception hierarchy shared by all modules.

Exit-code mapping in the CLI: validation problems (config or input data)
exit 1, I/O problems exit 2, internal consistency breaches exit 3.
"""


class PaafError(Exception):
    """Base class for all package errors."""


class SchemaError(PaafError):
    """A record in an input file is missing a field or carries a wrong type."""

    def __init__(self, message, path=None, line=None):
        ctx = ""
        if path is not None:
            ctx = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + ctx)
        self.path = path
        self.line = line


class InvariantError(PaafError):
    """Input data violates a documented invariant (e.g. rx before tx)."""


class ConfigError(PaafError):
    """A configuration value is out of range or inconsistent."""


class InternalCheckError(PaafError):
    """An internal consistency check failed; indicates a bug, not bad input."""
