"""Exception types shared across the package."""

from __future__ import annotations


class ParseError(ValueError):
    """Malformed input. ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ValidationError(ValueError):
    """Input parsed but violates a data invariant (contradictory edges, conflicting origins)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValueError):
    """Invalid run or generator configuration."""


class UnknownASError(LookupError):
    def __init__(self, asn: int):
        self.asn = asn
        super().__init__(f"AS{asn} is not in the topology")
