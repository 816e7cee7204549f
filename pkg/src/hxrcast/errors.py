"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/argument/schema problems
exit 2, transport-layer problems exit 3, numeric failures exit 4.
"""


class HxrcastError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HxrcastError):
    """Invalid configuration object or config file."""


class ArgumentError(HxrcastError, ValueError):
    """Invalid argument to an operation."""


class TemplateError(ArgumentError):
    """Unresolved or unknown placeholder in a prompt template."""

    def __init__(self, placeholder: str, message: str | None = None):
        self.placeholder = placeholder
        super().__init__(message or f"unresolved placeholder: {placeholder!r}")


class SchemaError(HxrcastError):
    """A record violates the file schema (e.g. mismatched array lengths)."""


class ParseError(SchemaError):
    """Malformed serialized record; names the offending line/field."""


class TransportError(HxrcastError):
    """Service endpoint unreachable or request failed at the transport layer."""


class DeadlineError(TransportError):
    """Request deadline expired (distinct from other transport failures)."""


class CapacityError(HxrcastError):
    """Request exceeds the service's advertised capacity (HTTP 413)."""


class CompatibilityError(HxrcastError):
    """Protocol version mismatch between client and server (HTTP 426)."""


class RankError(HxrcastError):
    """Singular linear system with no regularization."""


class NumericError(HxrcastError):
    """Non-finite value where finite math is required."""


class StateError(HxrcastError):
    """Operation called before its prerequisite state exists (e.g. untrained)."""
