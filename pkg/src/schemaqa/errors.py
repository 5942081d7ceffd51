"""Exception hierarchy shared by every stage of the pipeline."""
from __future__ import annotations


class SchemaQAError(Exception):
    """Base class for all domain errors.

    ``stage`` is filled in by the pipeline when an error crosses a stage
    boundary, so callers can tell which step failed.
    """

    stage: str | None = None

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(SchemaQAError):
    pass


# schema graph
class SchemaSyntaxError(SchemaQAError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(SchemaQAError):
    def __init__(self, message: str, entity: str | None = None):
        self.entity = entity
        super().__init__(message)


class UnknownNode(SchemaQAError, KeyError):
    pass


# retrieval
class EmbeddingError(SchemaQAError):
    pass


class EmptyKeywordSet(SchemaQAError):
    pass


class DimensionMismatch(SchemaQAError, ValueError):
    pass


class ZeroVector(SchemaQAError, ValueError):
    pass


class EmptyInput(SchemaQAError, ValueError):
    pass


class EmptyIndex(SchemaQAError):
    pass


# path engine
class NotAKey(SchemaQAError):
    pass


class NoReachableKey(SchemaQAError):
    pass


class PathExplosion(SchemaQAError):
    pass


class MixedTablePath(SchemaQAError):
    pass


# table store
class MissingTableFile(SchemaQAError):
    pass


class HeaderMismatch(SchemaQAError):
    def __init__(self, table: str, missing: list[str], extra: list[str]):
        self.table = table
        self.missing = missing
        self.extra = extra
        parts = []
        if missing:
            parts.append("missing " + ", ".join(missing))
        if extra:
            parts.append("unexpected " + ", ".join(extra))
        super().__init__(f"header of {table}: " + "; ".join(parts))


class DuplicateKey(SchemaQAError):
    pass


class UnknownAttribute(SchemaQAError):
    pass


class UnjoinableGroups(SchemaQAError):
    pass


class TemplateColumnMissing(SchemaQAError):
    pass


# model gateway
class ProviderError(SchemaQAError):
    def __init__(self, message: str, kind: str = "transport", retryable: bool = True):
        self.kind = kind
        self.retryable = retryable
        super().__init__(message)


class EmptyText(SchemaQAError, ValueError):
    pass


class UnscriptedMockInput(SchemaQAError):
    def __init__(self, template_id: str | None, digest: str | None = None):
        self.template_id = template_id
        self.digest = digest
        super().__init__(f"no scripted response for template {template_id!r} (bindings digest {digest})")


class UnboundPlaceholder(SchemaQAError, KeyError):
    pass


# pipeline
class MalformedDecomposition(SchemaQAError):
    def __init__(self, message: str, response: str):
        self.response = response
        super().__init__(f"{message}: {response!r}")


class UnmappableConstraint(SchemaQAError):
    pass


class NoFacts(SchemaQAError):
    def __init__(self, message: str, plan=None):
        self.plan = plan
        super().__init__(message)


class EmptyPaths(SchemaQAError):
    pass
