"""Privacy amplification by parity compression of the measured key.

After bit errors are corrected both parties hold the same string.  Each
amplification round replaces every bit of a public subset by its XOR with
a destination bit and drops the destination.  The X-basis hashing round on
pairs has exactly this effect on the Z outcomes, which is what lets the
classical picture stand in for the quantum one.

Every key bit carries its *lineage*: the GF(2) row expressing it over the
bits the amplification started from, stored packed as uint64 words.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _gf2
from .errors import KeyExhausted
from .hashing import random_subset
from .rates import RateInputs, _inflated_entropy, binary_entropy


@dataclass(frozen=True)
class KeyString:
    """A key under compression.

    ``bits`` and ``origin_tags`` have one entry per current key position.
    ``lineage`` has shape ``(len(bits), words)`` and packs bit ``j`` of each
    row little-endian into the words; ``n_orig`` is the number of original
    columns.
    """

    bits: np.ndarray
    origin_tags: np.ndarray
    lineage: np.ndarray
    n_orig: int

    def __post_init__(self):
        bits = np.array(self.bits, dtype=np.uint8)
        tags = np.array(self.origin_tags, dtype=bool)
        lin = np.array(self.lineage, dtype=np.uint64).reshape(len(bits), -1)
        if tags.shape != bits.shape:
            raise ValueError("origin_tags must match bits")
        if np.any(bits > 1):
            raise ValueError("key entries must be bits")
        for name, arr in (("bits", bits), ("origin_tags", tags), ("lineage", lin)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def fresh(cls, bits, origin_tags=None) -> "KeyString":
        """Start tracking: the lineage is the identity on ``bits``."""
        bits = np.asarray(bits, dtype=np.uint8)
        n = bits.size
        tags = np.zeros(n, dtype=bool) if origin_tags is None else origin_tags
        words = max(1, (n + 63) // 64)
        lin = np.zeros((n, words), dtype=np.uint64)
        idx = np.arange(n)
        lin[idx, idx // 64] = np.left_shift(np.uint64(1), (idx % 64).astype(np.uint64))
        return cls(bits, tags, lin, n)

    def __len__(self):
        return int(self.bits.size)

    def lineage_matrix(self) -> np.ndarray:
        """Unpacked ``(len, n_orig)`` uint8 lineage."""
        raw = self.lineage.view(np.uint8).reshape(len(self), -1)
        return np.unpackbits(raw, axis=1, bitorder="little")[:, : self.n_orig]

    def lineage_rows(self) -> list[int]:
        return [int.from_bytes(row.tobytes(), "little") for row in self.lineage]

    def tolist(self) -> list[int]:
        return self.bits.tolist()


def pa_round_bits(k: KeyString, subset, d: int) -> KeyString:
    """XOR bit ``d`` into every other bit of ``subset`` and drop ``d``.

    Positions refer to the current key; survivors are renumbered in order.
    """
    idx = np.unique(np.asarray(list(subset), dtype=np.intp))
    if idx.size < 2:
        raise ValueError("subset must contain at least two bits")
    if d not in idx:
        raise ValueError(f"destination {d} is not in the subset")
    if idx[0] < 0 or idx[-1] >= len(k):
        raise IndexError("subset refers to a bit that is no longer in the key")
    others = idx[idx != d]
    bits = k.bits.copy()
    lin = k.lineage.copy()
    bits[others] ^= bits[d]
    lin[others] ^= lin[d]
    keep = np.ones(len(k), dtype=bool)
    keep[d] = False
    return KeyString(bits[keep], k.origin_tags[keep], lin[keep], k.n_orig)


@dataclass(frozen=True)
class PaSchedule:
    """Round counts: phase 1 (``l``), phase 2 (the extra tagged rounds) and the
    untagged reference count ``n_p``."""

    rounds_phase1: int
    rounds_phase2: int = 0
    n_p: int = 0

    def __post_init__(self):
        if min(self.rounds_phase1, self.rounds_phase2, self.n_p) < 0:
            raise ValueError("round counts must be non-negative")

    @property
    def total(self) -> int:
        return self.rounds_phase1 + self.rounds_phase2


def _ceil(x: float) -> int:
    return math.ceil(round(x, 9))


def pa_rounds_untagged(n: int, delta_p: float, slack: int = 0) -> int:
    """ceil(n H(delta_p)) + slack."""
    if not 0.0 <= delta_p < 0.5:
        raise ValueError(f"delta_p must lie in [0, 1/2), got {delta_p}")
    return _ceil(n * binary_entropy(delta_p)) + slack


def pa_schedule_tagged(n: int, delta_p: float, delta: float, delta_b: float, *,
                       slack: int = 0, ec_rounds: int | None = None) -> PaSchedule:
    """Two-phase schedule for a source with tag fraction ``delta``.

    Phase 1 runs ceil((1 + delta) n H(delta_p / (1 - delta))) rounds.  Phase 2
    adds ceil(delta q) rounds, where q is the key length left after phase 1:
    the closed form n (1 - H(delta_b) - (1 + delta) H(.)) or, when
    ``ec_rounds`` is given, the actual count left by this run.
    """
    inp = RateInputs(delta_b, delta_p, delta, n)
    hq = _inflated_entropy(inp)  # raises AbortNoKey past the edge
    phase1 = _ceil((1.0 + delta) * n * hq) + slack
    if ec_rounds is None:
        q = n * (1.0 - binary_entropy(delta_b) - (1.0 + delta) * hq)
    else:
        q = n - ec_rounds - phase1
    phase2 = _ceil(delta * q) if delta > 0 and q > 0 else 0
    return PaSchedule(phase1, phase2, pa_rounds_untagged(n, delta_p, slack))


def untagged_discard_target(n: int, delta_p: float, delta: float) -> int:
    """ceil((1 - delta^2) n H(delta_p / (1 - delta))): how many phase-1
    destinations must come from untagged pairs in strict mode."""
    hq = _inflated_entropy(RateInputs(0.0, delta_p, delta, n))
    return _ceil((1.0 - delta * delta) * n * hq)


@dataclass(frozen=True)
class PaRound:
    phase: int
    subset: tuple[int, ...]
    dest: int


def run_pa(k: KeyString, schedule: PaSchedule, rng: np.random.Generator, *,
           untagged_target: int | None = None, log: list | None = None) -> KeyString:
    """Execute phase 1 then phase 2 with public random subsets.

    With ``untagged_target`` phase 1 continues past ``rounds_phase1`` until
    that many destinations originated from untagged pairs.  Each round is
    appended to ``log`` as a :class:`PaRound` when a list is given, so the
    other party can replay it with :func:`replay_pa`.
    """
    if schedule.total >= len(k):
        raise KeyExhausted(f"{schedule.total} amplification rounds consume all {len(k)} bits")
    done = 0
    untagged_hits = 0
    while done < schedule.rounds_phase1 or (
        untagged_target is not None and untagged_hits < untagged_target
    ):
        if len(k) - 1 <= schedule.rounds_phase2:
            raise KeyExhausted("strict untagged discards exhausted the key")
        subset, d = random_subset(np.arange(len(k)), rng)
        untagged_hits += int(not k.origin_tags[d])
        k = pa_round_bits(k, subset, d)
        done += 1
        if log is not None:
            log.append(PaRound(1, subset, d))
    for _ in range(schedule.rounds_phase2):
        subset, d = random_subset(np.arange(len(k)), rng)
        k = pa_round_bits(k, subset, d)
        if log is not None:
            log.append(PaRound(2, subset, d))
    return k


def replay_pa(k: KeyString, rounds) -> KeyString:
    for rnd in rounds:
        k = pa_round_bits(k, rnd.subset, rnd.dest)
    return k


def lineage_rank_check(k: KeyString, untagged_columns) -> bool:
    """True iff the key's lineage rows, restricted to ``untagged_columns``,
    are linearly independent over GF(2)."""
    mask = 0
    for c in untagged_columns:
        mask |= 1 << int(c)
    rows = [row & mask for row in k.lineage_rows()]
    return _gf2.rank_of_rows(rows) == len(rows)


def apply_lineage(k: KeyString, original_bits) -> np.ndarray:
    """Recompute the key as lineage times the original bits."""
    orig = np.asarray(original_bits, dtype=np.uint8)
    return (k.lineage_matrix().astype(np.int64) @ orig.astype(np.int64) % 2).astype(np.uint8)


__all__ = [
    "KeyString",
    "PaRound",
    "PaSchedule",
    "apply_lineage",
    "lineage_rank_check",
    "pa_round_bits",
    "pa_rounds_untagged",
    "pa_schedule_tagged",
    "replay_pa",
    "run_pa",
    "untagged_discard_target",
]
