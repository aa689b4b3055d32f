"""Closed-form round counts and asymptotic key rates."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AbortNoKey


def binary_entropy(x: float) -> float:
    """H(x) in bits, with 0 log 0 taken as 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy is defined on [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class RateInputs:
    delta_b: float
    delta_p: float
    delta: float = 0.0
    n: int = 1

    def __post_init__(self):
        for name in ("delta_b", "delta_p"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{name} must lie in [0, 1/2), got {v}")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError(f"tag fraction must lie in [0, 1), got {self.delta}")
        if self.n < 0:
            raise ValueError("n must be non-negative")

    @property
    def inflated_phase_rate(self) -> float:
        """Worst-case phase-flip rate of the untagged pairs."""
        return self.delta_p / (1.0 - self.delta)


def _inflated_entropy(inp: RateInputs) -> float:
    q = inp.inflated_phase_rate
    if q >= 0.5:
        raise AbortNoKey(
            f"worst-case untagged phase rate {q:.4f} >= 1/2 leaves nothing to distil"
        )
    return binary_entropy(q)


def likely_count_exponents(inp: RateInputs) -> tuple[float, float, float]:
    """log2 of the likely-string counts: bit strings, phase strings, and
    phase strings of the untagged pairs after bit-error correction."""
    n = inp.n
    hb = binary_entropy(inp.delta_b)
    hp = binary_entropy(inp.delta_p)
    untagged = (1.0 - inp.delta ** 2) * n * _inflated_entropy(inp)
    return n * hb, n * hp, untagged


def doubling_rule_exponent(inp: RateInputs, n_b: float) -> float:
    """log2 count from applying the doubling rule literally.

    Untagged pairs contribute (1 - delta) n H(delta_p / (1 - delta)); each of
    the delta * n_b tagged destinations doubles the count.  This is not the
    closed form used by :func:`likely_count_exponents` and is kept separate.
    """
    return (1.0 - inp.delta) * inp.n * _inflated_entropy(inp) + inp.delta * n_b


def key_rate(inp: RateInputs) -> float:
    """Asymptotic key fraction 1 - H(delta_b) - H(delta_p); may be negative."""
    return 1.0 - binary_entropy(inp.delta_b) - binary_entropy(inp.delta_p)


def tagged_key_rate(inp: RateInputs) -> tuple[float, float, float]:
    """Key fraction for a source with tag fraction ``delta``.

    Returns ``(rf, q_fraction, l_fraction)``: the final key fraction, the
    fraction left after the first privacy-amplification phase, and that
    phase's round count per pair.
    """
    d = inp.delta
    hb = binary_entropy(inp.delta_b)
    hq = _inflated_entropy(inp)
    l_frac = (1.0 + d) * hq
    q_frac = 1.0 - hb - hq - d * hq
    rf = 1.0 - d - (1.0 - d) * hb - hq + d * d * hq
    return rf, q_frac, l_frac


def is_positive(rate: float) -> bool:
    """Advisory flag: a non-positive rate means the session should abort."""
    return rate > 0.0
