"""Bilateral CNOT algebra, parity rounds and candidate-string bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .pairstate import Basis, Ensemble, PairState

MAX_ENUMERATED = 20


@dataclass(frozen=True)
class ParityRound:
    """One hashing step: subset ``r``, destination ``d`` and both announcements.

    ``subset`` holds stable pair indices in increasing order.  The XOR of the
    two announced parities is ``r . s_b`` for a Z round and ``r . s_p`` for an
    X round, evaluated on the ensemble before the round.
    """

    basis: Basis
    subset: tuple[int, ...]
    dest: int
    parity_alice: int
    parity_bob: int

    def __post_init__(self):
        if self.dest not in self.subset:
            raise ValueError("destination must belong to the subset")
        if len(self.subset) < 2:
            raise ValueError("a round needs at least two pairs")

    @property
    def syndrome(self) -> int:
        return self.parity_alice ^ self.parity_bob

    @property
    def mask(self) -> int:
        m = 0
        for i in self.subset:
            m |= 1 << i
        return m


def bicnot(control: PairState, target: PairState) -> tuple[PairState, PairState]:
    """Bilateral CNOT: bit labels flow forward, phase labels flow backward."""
    new_c = PairState(control.a, control.b ^ target.b, control.tagged, control.tag_basis)
    new_t = PairState(target.a ^ control.a, target.b, target.tagged, target.tag_basis)
    return new_c, new_t


def _validate(e: Ensemble, r, d) -> np.ndarray:
    idx = np.unique(np.asarray(list(r), dtype=np.intp))
    if idx.size < 2:
        raise ValueError("subset must contain at least two pairs")
    if d not in idx:
        raise ValueError(f"destination {d} is not in the subset")
    if idx[0] < 0 or idx[-1] >= len(e):
        raise IndexError("subset index out of range")
    if not e.alive[idx].all():
        raise ValueError("subset refers to a discarded pair")
    return idx


def _coin(rng) -> int:
    return 0 if rng is None else int(rng.integers(0, 2))


def z_parity_round(e: Ensemble, r, d: int, rng=None) -> tuple[ParityRound, Ensemble]:
    """Collect the Z parity of ``r`` into ``d`` by bi-CNOTs, measure and discard ``d``.

    Survivors keep their bit labels; each survivor in ``r`` picks up the
    destination's phase label (backward action).  When the ensemble carries
    Alice's values her announcement is their parity, otherwise it is drawn
    from ``rng``.
    """
    idx = _validate(e, r, d)
    others = idx[idx != d]
    a, b = e.a.copy(), e.b.copy()
    bit_parity = int(np.bitwise_xor.reduce(a[idx]))
    b[others] ^= b[d]
    a[d] = bit_parity
    alice = None
    if e.alice is not None:
        alice = e.alice.copy()
        parity_alice = int(np.bitwise_xor.reduce(alice[idx]))
        alice[d] = parity_alice
    else:
        parity_alice = _coin(rng)
    alive = e.alive.copy()
    alive[d] = False
    rnd = ParityRound(Basis.Z, tuple(int(i) for i in idx), int(d), parity_alice,
                      parity_alice ^ bit_parity)
    return rnd, e.replace(a=a, b=b, alive=alive, alice=alice)


def x_parity_round(e: Ensemble, r, d: int, rng=None) -> tuple[ParityRound, Ensemble]:
    """Phase-basis counterpart of :func:`z_parity_round`.

    Reveals ``r . s_p``; survivors in ``r`` pick up the destination's bit
    label.  In the Z picture this is a bi-CNOT with ``d`` as control, so
    Alice's Z values of the survivors are XORed with hers on ``d``.  Her X
    outcome on ``d`` is uniformly random and comes from ``rng``.
    """
    idx = _validate(e, r, d)
    others = idx[idx != d]
    a, b = e.a.copy(), e.b.copy()
    phase_parity = int(np.bitwise_xor.reduce(b[idx]))
    a[others] ^= a[d]
    b[d] = phase_parity
    alice = None
    if e.alice is not None:
        alice = e.alice.copy()
        alice[others] ^= alice[d]
    parity_alice = _coin(rng)
    alive = e.alive.copy()
    alive[d] = False
    rnd = ParityRound(Basis.X, tuple(int(i) for i in idx), int(d), parity_alice,
                      parity_alice ^ phase_parity)
    return rnd, e.replace(a=a, b=b, alive=alive, alice=alice)


def parity_round(e: Ensemble, basis: Basis, r, d: int, rng=None):
    if Basis(basis) is Basis.Z:
        return z_parity_round(e, r, d, rng)
    return x_parity_round(e, r, d, rng)


def random_subset(live, rng: np.random.Generator) -> tuple[tuple[int, ...], int]:
    """Draw a public hashing subset: each live index with probability 1/2,
    redrawn until it has two members, and a uniform destination inside it."""
    live = np.asarray(live, dtype=np.intp)
    if live.size < 2:
        raise ValueError("need at least two live indices to hash")
    while True:
        pick = live[rng.random(live.size) < 0.5]
        if pick.size >= 2:
            break
    d = int(pick[rng.integers(pick.size)])
    return tuple(int(i) for i in pick), d


# --- candidate sets -------------------------------------------------------


def _popparity(x: int) -> int:
    return bin(x).count("1") & 1


def _drop_bit(m: int, j: int) -> int:
    low = m & ((1 << j) - 1)
    return low | ((m >> (j + 1)) << j)


@dataclass(frozen=True)
class CandidateSet:
    """Error strings still consistent with everything announced.

    ``positions`` lists the stable pair indices the strings range over; bit
    ``j`` of a member refers to ``positions[j]``.  Above ``MAX_ENUMERATED``
    positions only ``log2_count`` is tracked.
    """

    basis: str
    positions: tuple[int, ...]
    members: frozenset | None
    log2_count: float

    def __post_init__(self):
        if self.basis not in ("bit", "phase"):
            raise ValueError("basis must be 'bit' or 'phase'")

    @property
    def enumerated(self) -> bool:
        return self.members is not None

    def __len__(self):
        if self.members is None:
            raise TypeError("analytic candidate set has no explicit size")
        return len(self.members)

    @classmethod
    def from_members(cls, basis, positions, members) -> "CandidateSet":
        members = frozenset(int(m) for m in members)
        log2 = math.log2(len(members)) if members else float("-inf")
        return cls(basis, tuple(int(p) for p in positions), members, log2)

    @classmethod
    def hamming_ball(cls, basis, positions, radius: int, exact: bool = False) -> "CandidateSet":
        positions = tuple(int(p) for p in positions)
        if len(positions) > MAX_ENUMERATED:
            raise ValueError(f"enumeration limited to {MAX_ENUMERATED} positions")
        weights = [radius] if exact else range(radius + 1)
        members = set()
        for w in weights:
            for combo in combinations(range(len(positions)), w):
                members.add(sum(1 << j for j in combo))
        return cls.from_members(basis, positions, members)

    @classmethod
    def analytic(cls, basis, positions, log2_count: float) -> "CandidateSet":
        return cls(basis, tuple(int(p) for p in positions), None, float(log2_count))

    def encode(self, values) -> int:
        """Pack per-position bits (indexable by stable index) into a member."""
        return sum(int(values[p]) << j for j, p in enumerate(self.positions))

    def truth(self, e: Ensemble) -> int:
        return self.encode(e.b if self.basis == "phase" else e.a)

    def __contains__(self, member) -> bool:
        if self.members is None:
            raise TypeError("analytic candidate set cannot answer membership")
        return int(member) in self.members


def candidate_update(c: CandidateSet, rnd: ParityRound, dest_state_known: int | None = None) -> CandidateSet:
    """Carry a candidate set through one parity round.

    A round in the conjugate basis (Z round for phase strings, X round for
    bit strings) applies the backward action: each candidate's survivors in
    the subset are XORed with the candidate's own destination value.  If the
    destination is not covered by the set (a tagged pair) and its value is
    not supplied, each candidate branches over both values, so the count can
    at most double.  A round in the same basis filters candidates by the
    announced parity whenever every subset member is accounted for.  Either
    way the destination coordinate is projected out.
    """
    conj = (c.basis == "phase") == (Basis(rnd.basis) is Basis.Z)
    where = {p: j for j, p in enumerate(c.positions)}
    d = rnd.dest
    dj = where.get(d)
    sub_mask = 0
    uncovered = False
    for k in rnd.subset:
        if k == d:
            continue
        if k in where:
            sub_mask |= 1 << where[k]
        else:
            uncovered = True
    new_positions = tuple(p for p in c.positions if p != d)
    unknown_dest = dj is None and dest_state_known is None

    if conj:
        if c.members is None:
            return CandidateSet.analytic(c.basis, new_positions,
                                         c.log2_count + (1.0 if unknown_dest else 0.0))
        out = set()
        for m in c.members:
            if dj is not None:
                dv = (m >> dj) & 1
                v = m ^ sub_mask if dv else m
                out.add(_drop_bit(v, dj))
            elif dest_state_known is not None:
                out.add(m ^ sub_mask if dest_state_known else m)
            else:
                out.add(m)
                out.add(m ^ sub_mask)
        return CandidateSet.from_members(c.basis, new_positions, out)

    can_filter = not uncovered and not unknown_dest
    if c.members is None:
        log2 = max(0.0, c.log2_count - 1.0) if can_filter else c.log2_count
        return CandidateSet.analytic(c.basis, new_positions, log2)
    full_mask = sub_mask | (1 << dj if dj is not None else 0)
    offset = dest_state_known if (dj is None and dest_state_known is not None) else 0
    out = set()
    for m in c.members:
        if can_filter and (_popparity(m & full_mask) ^ offset) != rnd.syndrome:
            continue
        out.add(_drop_bit(m, dj) if dj is not None else m)
    return CandidateSet.from_members(c.basis, new_positions, out)
