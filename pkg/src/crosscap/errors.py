"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class CrosscapError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CrosscapError):
    """A file or model output could not be parsed."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class IntegrityError(CrosscapError):
    """Cross-record consistency violation (duplicate ids, dangling references)."""


class ValidationError(CrosscapError):
    """A single record or argument violates its contract."""


class NotFoundError(CrosscapError, KeyError):
    """A referenced entity does not exist."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class NoHypernymError(CrosscapError):
    """A synset has no usable (non-root) ancestors to sample from."""


class TransportError(CrosscapError):
    """Backend unreachable, timed out, or otherwise failed to respond."""


class ProtocolError(CrosscapError):
    """Backend responded, but the response violates the wire contract."""


class BatchError(CrosscapError):
    """One or more elements of a batch operation failed."""

    def __init__(self, message: str, failed_indices: list[int]):
        super().__init__(f"{message} (failed indices: {failed_indices})")
        self.failed_indices = failed_indices
