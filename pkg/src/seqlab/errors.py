"""Exception types shared across the toolkit."""


class SeqlabError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SeqlabError):
    """A value violates a structural invariant (tag scheme, spans, tokens)."""


class ConllParseError(SeqlabError):
    """A CoNLL file could not be parsed; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")


class OutputParseError(SeqlabError):
    """A decoder output string does not conform to the sentinel/tag format.

    ``reason`` is one of "token_count", "sentinel", "tag", "scheme" so tests
    can distinguish failure modes.
    """

    def __init__(self, message, reason, position=None):
        self.reason = reason
        self.position = position
        super().__init__(message)


class ShapeError(SeqlabError):
    """Tensor operands have incompatible shapes; names the operation."""


class DistributionError(SeqlabError):
    """A vector is not a valid probability distribution."""


class ConfigError(SeqlabError):
    """A configuration value is missing, malformed, or inconsistent."""


class SizeError(SeqlabError):
    """A requested size exceeds what the data or an enumeration cap allows."""


class ContractError(SeqlabError):
    """A caller violated an operation's precondition."""


class TransportError(SeqlabError):
    """External scorer session failed at the transport level (I/O, timeout)."""


class ProtocolError(TransportError):
    """External scorer peer sent a response that violates the wire protocol."""
