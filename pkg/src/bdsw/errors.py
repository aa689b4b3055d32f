"""Exceptions shared across the distillation modules."""


class DistillationError(Exception):
    """Base class for protocol-level failures."""


class AbortNoKey(DistillationError):
    """The error estimates leave no positive key budget."""


class DecodingFailed(DistillationError):
    """Bit-error decoding did not produce a usable correction."""


class DecodingAmbiguous(DecodingFailed):
    """More than one error pattern is consistent with every announced parity."""

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates


class OutOfRadius(DecodingFailed):
    """No error pattern within the decode radius matches the syndrome."""


class RankDeficient(DecodingFailed):
    """The parity system does not have full row rank."""


class EnumerationBudgetExceeded(DecodingFailed):
    """The requested search is larger than the configured budget."""


class KeyExhausted(AbortNoKey):
    """The round schedule consumes every remaining bit."""
