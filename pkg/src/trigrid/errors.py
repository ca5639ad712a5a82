"""Exception types shared across the package."""


class TrigridError(Exception):
    """Base class for all package errors."""


class MalformedInputError(TrigridError, ValueError):
    """Input graph data violates a precondition (bad ids, bad partition)."""


class InvalidPermutationError(TrigridError, ValueError):
    """A vertex relabeling is not a bijection on [0, n)."""


class ConfigError(TrigridError, ValueError):
    """Run configuration is unusable (e.g. rank count not a perfect square)."""


class DecodeError(TrigridError, ValueError):
    """A byte buffer does not decode to a valid block."""


class ProtocolError(TrigridError, RuntimeError):
    """Ranks disagreed about the communication pattern."""


class TransportAborted(TrigridError, RuntimeError):
    """A peer rank failed; this rank's pending operation was abandoned."""


class InternalInvariantError(TrigridError, RuntimeError):
    """An internal consistency check failed (engine alignment, block residues)."""


class UndefinedMetricError(TrigridError, ValueError):
    """A metric is undefined for the given inputs (e.g. all-zero imbalance)."""
