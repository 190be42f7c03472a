"""Exception hierarchy shared across the gateway."""

from __future__ import annotations


class PromptGateError(Exception):
    """Base class for all gateway errors."""


class ConfigurationError(PromptGateError):
    """Invalid configuration: bad parameters, broken cross-references, schema violations."""

    def __init__(self, message: str, defects: list[str] | None = None):
        self.defects = list(defects or [])
        if self.defects:
            message = message + "\n  - " + "\n  - ".join(self.defects)
        super().__init__(message)


class DataError(PromptGateError):
    """Malformed or unusable input data (corpora, windows, feature vectors)."""


class TrainingError(PromptGateError):
    """Detector training cannot proceed (e.g. single-class data)."""


class ParseError(PromptGateError):
    """Rule DSL lexical or syntax error, with source position."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class EvaluationError(PromptGateError):
    """Rule evaluation failure, e.g. a term with no binding."""


class ValidationError(PromptGateError):
    """A record violates its invariants (unknown action id, unknown requirement id, ...)."""


class AuthorizationError(PromptGateError):
    """Actor role is not allowed to perform the operation."""


class StateError(PromptGateError):
    """Illegal state transition (double promotion, flagging a PASS decision, ...)."""


class IntegrityError(PromptGateError):
    """Referential integrity broken: a record points at a log entry that does not exist."""


class BackendError(PromptGateError):
    """LLM backend unreachable or misbehaving."""
