"""Exceptions raised by :mod:`fbin_link`."""

from typing import Iterable, List, Optional


class FbinLinkError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FbinLinkError, ValueError):
    """A physical input lies outside the domain of a model."""


class ConfigError(FbinLinkError, ValueError):
    """A scenario document failed validation.

    All problems found are kept in :attr:`diagnostics`, one string per field.
    """

    def __init__(self, diagnostics: Iterable[str]) -> None:
        self.diagnostics: List[str] = list(diagnostics)
        super().__init__("\n".join(self.diagnostics) or "invalid configuration")


class TagFileError(FbinLinkError, ValueError):
    """A tag file or its metadata sidecar is malformed."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AnalysisError(FbinLinkError, RuntimeError):
    """The time-tag pipeline could not produce a result."""


class UsageError(FbinLinkError):
    """The command line was used incorrectly."""
