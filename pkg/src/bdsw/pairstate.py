"""Bell pairs as classical (bit-flip, phase-flip) labels.

A pair in state |chi_ab> relative to |phi+> is stored as the two bits
``a`` (bit flip) and ``b`` (phase flip)::

    (0, 0) |phi+>    (0, 1) |phi->
    (1, 0) |psi+>    (1, 1) |psi->

An :class:`Ensemble` keeps these labels in numpy arrays indexed by a stable
pair index.  Discarded pairs keep their index and are only marked dead, so
transcripts that refer to indices stay meaningful for the whole session.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

BELL_LABELS = {(0, 0): "phi+", (0, 1): "phi-", (1, 0): "psi+", (1, 1): "psi-"}
_LABEL_BITS = {v: k for k, v in BELL_LABELS.items()}


class Basis(enum.IntEnum):
    Z = 0
    X = 1


class Pauli(enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"


class Sampling(enum.Enum):
    EXACT = "exact"
    BERNOULLI = "bernoulli"


# (toggles a, toggles b) for each Pauli acting on one half of the pair
_PAULI_ACTION = {
    Pauli.I: (0, 0),
    Pauli.X: (1, 0),
    Pauli.Y: (1, 1),
    Pauli.Z: (0, 1),
}


@dataclass(frozen=True)
class PairState:
    a: int = 0
    b: int = 0
    tagged: bool = False
    tag_basis: Basis | None = None

    def __post_init__(self):
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValueError(f"labels must be bits, got ({self.a}, {self.b})")
        if self.tag_basis is not None and not self.tagged:
            raise ValueError("tag_basis is only meaningful on a tagged pair")

    @property
    def label(self) -> str:
        return BELL_LABELS[(self.a, self.b)]

    @classmethod
    def from_label(cls, label: str, **kw) -> "PairState":
        a, b = _LABEL_BITS[label]
        return cls(a, b, **kw)


def bell_label(a: int, b: int) -> str:
    return BELL_LABELS[(a, b)]


def label_bits(label: str) -> tuple[int, int]:
    return _LABEL_BITS[label]


def apply_pauli(p: PairState, op: Pauli | str) -> PairState:
    """Apply a single-qubit Pauli to one half of the pair.

    X flips the bit label, Z flips the phase label and Y flips both.  The
    overall phase picked up by Y is irrelevant to the label.
    """
    da, db = _PAULI_ACTION[Pauli(op)]
    return PairState(p.a ^ da, p.b ^ db, p.tagged, p.tag_basis)


@dataclass(frozen=True)
class ChannelParams:
    delta_b: float = 0.0
    delta_p: float = 0.0
    tag_fraction: float = 0.0
    sampling: Sampling = Sampling.EXACT
    correlate: bool = False
    tag_basis: Basis | None = None  # None: drawn uniformly per tagged pair

    def __post_init__(self):
        for name in ("delta_b", "delta_p"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{name} must lie in [0, 1/2), got {v}")
        if not 0.0 <= self.tag_fraction < 1.0:
            raise ValueError(f"tag_fraction must lie in [0, 1), got {self.tag_fraction}")
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        if self.tag_basis is not None:
            object.__setattr__(self, "tag_basis", Basis(self.tag_basis))


def exact_count(fraction: float, n: int) -> int:
    """floor(fraction * n), robust to binary round-off such as 0.29 * 100."""
    return math.floor(round(fraction * n, 9))


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Ensemble:
    """Ordered, immutable collection of Bell-pair labels.

    ``alice`` optionally carries Alice's virtual Z outcome for every pair;
    it is what the key is made of once the pairs are measured.  Operations
    return new ensembles and never mutate their input.
    """

    __slots__ = ("a", "b", "tagged", "tag_basis", "alive", "alice")

    def __init__(self, a, b, tagged=None, tag_basis=None, alive=None, alice=None):
        n = len(a)
        self.a = _frozen(a, np.uint8)
        self.b = _frozen(b, np.uint8)
        self.tagged = _frozen(np.zeros(n) if tagged is None else tagged, bool)
        self.tag_basis = _frozen(np.zeros(n) if tag_basis is None else tag_basis, np.uint8)
        self.alive = _frozen(np.ones(n) if alive is None else alive, bool)
        self.alice = None if alice is None else _frozen(alice, np.uint8)
        if not (len(self.b) == len(self.tagged) == len(self.tag_basis) == len(self.alive) == n):
            raise ValueError("ensemble arrays must share one length")
        if self.alice is not None and len(self.alice) != n:
            raise ValueError("alice values must cover every pair")
        if np.any(self.a > 1) or np.any(self.b > 1):
            raise ValueError("labels must be bits")

    @classmethod
    def from_pairs(cls, pairs, alive=None, alice=None) -> "Ensemble":
        pairs = list(pairs)
        return cls(
            a=[p.a for p in pairs],
            b=[p.b for p in pairs],
            tagged=[p.tagged for p in pairs],
            tag_basis=[int(p.tag_basis or 0) for p in pairs],
            alive=alive,
            alice=alice,
        )

    @classmethod
    def from_labels(cls, labels, **kw) -> "Ensemble":
        return cls.from_pairs([PairState.from_label(s) for s in labels], **kw)

    def __len__(self):
        return len(self.a)

    def __repr__(self):
        sb, sp = strings(self)
        return f"Ensemble(n={len(self)}, live={self.n_live}, s_b={sb!r}, s_p={sp!r})"

    def __eq__(self, other):
        if not isinstance(other, Ensemble):
            return NotImplemented
        same = all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("a", "b", "tagged", "tag_basis", "alive")
        )
        if (self.alice is None) != (other.alice is None):
            return False
        return same and (self.alice is None or np.array_equal(self.alice, other.alice))

    __hash__ = None

    @property
    def n_live(self) -> int:
        return int(self.alive.sum())

    def live_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    @property
    def pairs(self) -> list[PairState]:
        return [self.pair(i) for i in range(len(self))]

    def pair(self, i: int) -> PairState:
        tagged = bool(self.tagged[i])
        return PairState(
            int(self.a[i]), int(self.b[i]), tagged, Basis(int(self.tag_basis[i])) if tagged else None
        )

    def replace(self, **changes) -> "Ensemble":
        fields = {f: getattr(self, f) for f in self.__slots__}
        fields.update(changes)
        return Ensemble(**fields)

    def transpose(self) -> "Ensemble":
        """Exchange bit and phase labels (a Hadamard on every qubit)."""
        return self.replace(a=self.b, b=self.a)

    def discard(self, indices) -> "Ensemble":
        idx = np.asarray(list(indices), dtype=np.intp)
        if idx.size and not self.alive[idx].all():
            raise ValueError("cannot discard a pair that is already dead")
        alive = self.alive.copy()
        alive[idx] = False
        return self.replace(alive=alive)


def strings(e: Ensemble) -> tuple[str, str]:
    """Bit-flip and phase-flip strings over the live pairs, in index order."""
    live = e.alive
    sb = "".join(map(str, e.a[live].tolist()))
    sp = "".join(map(str, e.b[live].tolist()))
    return sb, sp


def _place(n, count, rng, prefer=None):
    """Choose ``count`` distinct positions uniformly, optionally drawing from
    ``prefer`` first."""
    if prefer is None or len(prefer) == 0:
        return rng.choice(n, size=count, replace=False)
    prefer = rng.permutation(prefer)
    if count <= len(prefer):
        return prefer[:count]
    rest = np.setdiff1d(np.arange(n), prefer)
    return np.concatenate([prefer, rng.choice(rest, size=count - len(prefer), replace=False)])


def sample_ensemble(params: ChannelParams, n: int, rng: np.random.Generator) -> Ensemble:
    """Draw ``n`` pairs from |phi+> passed through the noisy channel.

    In exact-count mode precisely floor(delta * n) pairs carry each kind of
    flip; in Bernoulli mode every indicator is drawn independently.  Tags
    are assigned the same way with ``tag_fraction``.
    """
    if n < 1:
        raise ValueError("an ensemble needs at least one pair")
    a = np.zeros(n, dtype=np.uint8)
    b = np.zeros(n, dtype=np.uint8)
    if params.sampling is Sampling.EXACT:
        bit_pos = _place(n, exact_count(params.delta_b, n), rng)
        a[bit_pos] = 1
        phase_pos = _place(n, exact_count(params.delta_p, n), rng,
                           prefer=bit_pos if params.correlate else None)
        b[phase_pos] = 1
        tagged = np.zeros(n, dtype=bool)
        tagged[_place(n, exact_count(params.tag_fraction, n), rng)] = True
    else:
        a = (rng.random(n) < params.delta_b).astype(np.uint8)
        u = rng.random(n)
        if not params.correlate:
            b = (u < params.delta_p).astype(np.uint8)
        elif params.delta_p <= params.delta_b:
            # phase flips ride on bit flips; marginal rate stays delta_p
            b = (a.astype(bool) & (u < params.delta_p / params.delta_b)).astype(np.uint8) \
                if params.delta_b > 0 else np.zeros(n, dtype=np.uint8)
        else:
            extra = (params.delta_p - params.delta_b) / (1.0 - params.delta_b)
            b = (a.astype(bool) | (u < extra)).astype(np.uint8)
        tagged = rng.random(n) < params.tag_fraction
    if params.tag_basis is None:
        tag_basis = rng.integers(0, 2, size=n, dtype=np.uint8)
    else:
        tag_basis = np.full(n, int(params.tag_basis), dtype=np.uint8)
    tag_basis[~tagged] = 0
    return Ensemble(a, b, tagged, tag_basis)


def disclose_tags(e: Ensemble, rng: np.random.Generator) -> Ensemble:
    """Apply the worst-case tagging model to the ensemble.

    A pair Alice measured in Z and disclosed has a phase label that is a fair
    coin.  A pair disclosed in X can be kept free of X disagreement by Eve,
    so its phase label is cleared.
    """
    b = e.b.copy()
    z_tag = e.tagged & (e.tag_basis == Basis.Z)
    x_tag = e.tagged & (e.tag_basis == Basis.X)
    coins = rng.integers(0, 2, size=len(e), dtype=np.uint8)
    b[z_tag] = coins[z_tag]
    b[x_tag] = 0
    return e.replace(b=b)
