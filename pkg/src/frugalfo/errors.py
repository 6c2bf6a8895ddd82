"""Exception hierarchy shared by every module."""

from __future__ import annotations


class FrugalError(Exception):
    """Base class for all package errors."""


class InputError(FrugalError):
    """Malformed graph, embedding, query or automaton input."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmbeddingError(InputError):
    """A rotation system that does not describe a valid planar embedding."""


class ConfigurationError(FrugalError):
    """Parameters that are inconsistent with each other or with the input."""


class CapacityError(FrugalError):
    """A configured size cap was exceeded."""


class UnsupportedQueryError(FrugalError):
    """A query construct outside the supported fragment."""


class LivelockError(FrugalError):
    """The simulator hit its event cap without reaching quiescence."""


class InvariantError(FrugalError):
    """An internal invariant that the protocols rely on was violated."""


class RunError(FrugalError):
    """A node program raised while handling a message."""
