"""Brute-force checks against an explicit state-vector simulation.

Pair ``i`` of an ``n``-pair register lives on Alice's wire ``i`` and Bob's
wire ``n + i``.  Wire 0 is the most significant axis of the amplitude
tensor.  Labels are read back from the two stabilisers of a Bell pair:
<Z_A Z_B> = (-1)^a and <X_A X_B> = (-1)^b.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import hashing
from .pairstate import Basis, Ensemble, PairState, Pauli

MAX_QUBITS = 12
MAX_PAIRS = MAX_QUBITS // 2
NORM_TOL = 1e-12
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI_MATRICES = {
    Pauli.I: np.eye(2, dtype=complex),
    Pauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    Pauli.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    Pauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}


class OracleBudgetExceeded(ValueError):
    """The requested brute-force check is larger than the oracle allows."""


class StateVector:
    """Amplitudes of ``k <= 12`` qubits held as a ``(2,) * k`` tensor."""

    def __init__(self, amplitudes, n_pairs: int | None = None):
        psi = np.asarray(amplitudes, dtype=complex)
        k = int(round(np.log2(psi.size)))
        if psi.size != 2 ** k:
            raise ValueError("amplitude count must be a power of two")
        if k > MAX_QUBITS:
            raise OracleBudgetExceeded(f"{k} qubits exceeds the {MAX_QUBITS}-qubit cap")
        self.psi = psi.reshape((2,) * k)
        self.k = k
        self.n_pairs = k // 2 if n_pairs is None else n_pairs

    @classmethod
    def bell_pairs(cls, labels) -> "StateVector":
        """Product of Bell pairs given as ``(a, b)`` tuples."""
        labels = list(labels)
        n = len(labels)
        if 2 * n > MAX_QUBITS:
            raise OracleBudgetExceeded(f"{n} pairs exceeds the {MAX_PAIRS}-pair cap")
        psi = np.ones((), dtype=complex)
        for a, b in labels:
            pair = np.zeros((2, 2), dtype=complex)
            pair[0, a] = 1 / np.sqrt(2)
            pair[1, 1 ^ a] = (-1) ** b / np.sqrt(2)
            psi = np.multiply.outer(psi, pair)
        # axes are A0 B0 A1 B1 ...; regroup as A0..A(n-1) B0..B(n-1)
        order = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
        return cls(np.transpose(psi, order).ravel() if n else psi.ravel(), n)

    def copy(self) -> "StateVector":
        return StateVector(self.psi.copy(), self.n_pairs)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.psi) ** 2)))

    def alice(self, i: int) -> int:
        return i

    def bob(self, i: int) -> int:
        return self.n_pairs + i

    def apply_1q(self, u: np.ndarray, wire: int) -> None:
        moved = np.tensordot(u, self.psi, axes=([1], [wire]))
        self.psi = np.moveaxis(moved, 0, wire)

    def h(self, wire: int) -> None:
        self.apply_1q(_H, wire)

    def cnot(self, control: int, target: int) -> None:
        idx = [slice(None)] * self.k
        idx[control] = 1
        sub = self.psi[tuple(idx)]
        axis = target if target < control else target - 1
        self.psi[tuple(idx)] = np.flip(sub, axis=axis).copy()

    def bicnot(self, control_pair: int, target_pair: int) -> None:
        self.cnot(self.alice(control_pair), self.alice(target_pair))
        self.cnot(self.bob(control_pair), self.bob(target_pair))

    def _parity_sign(self, w1: int, w2: int) -> np.ndarray:
        sign = np.ones((2,) * self.k)
        for w in (w1, w2):
            shape = [2 if i == w else 1 for i in range(self.k)]
            sign = sign * np.array([1.0, -1.0]).reshape(shape)
        return sign

    def zz(self, w1: int, w2: int) -> float:
        return float(np.sum(np.abs(self.psi) ** 2 * self._parity_sign(w1, w2)))

    def xx(self, w1: int, w2: int) -> float:
        rotated = self.copy()
        rotated.h(w1)
        rotated.h(w2)
        return rotated.zz(w1, w2)

    def pair_label(self, i: int, tol: float = 1e-9) -> tuple[int, int]:
        """Bell label of pair ``i``; raises if the pair is not in a Bell state."""
        zz = self.zz(self.alice(i), self.bob(i))
        xx = self.xx(self.alice(i), self.bob(i))
        if abs(abs(zz) - 1) > tol or abs(abs(xx) - 1) > tol:
            raise ValueError(f"pair {i} is not a Bell state (<ZZ>={zz:.3g}, <XX>={xx:.3g})")
        return int(zz < 0), int(xx < 0)

    def measure_pair_z(self, i: int, tol: float = 1e-9) -> int:
        """Measure both halves of pair ``i`` in Z; returns the XOR of the outcomes.

        The XOR must be deterministic.  The state is projected onto the most
        likely joint outcome and renormalised.
        """
        wa, wb = self.alice(i), self.bob(i)
        probs = np.sum(np.abs(np.moveaxis(self.psi, (wa, wb), (0, 1))) ** 2,
                       axis=tuple(range(2, self.k)))
        odd = probs[0, 1] + probs[1, 0]
        if tol < odd < 1 - tol:
            raise ValueError(f"Z parity of pair {i} is not deterministic (P(odd)={odd:.3g})")
        za, zb = np.unravel_index(int(np.argmax(probs)), (2, 2))
        idx = [slice(None)] * self.k
        keep = np.zeros_like(self.psi)
        idx[wa], idx[wb] = za, zb
        keep[tuple(idx)] = self.psi[tuple(idx)]
        self.psi = keep / np.sqrt(probs[za, zb])
        return int(za ^ zb)

    def measure_pair_x(self, i: int) -> int:
        self.h(self.alice(i))
        self.h(self.bob(i))
        out = self.measure_pair_z(i)
        self.h(self.alice(i))
        self.h(self.bob(i))
        return out


# --- bi-CNOT truth table ---------------------------------------------------

_LABELS = [(a, b) for a in (0, 1) for b in (0, 1)]


def bicnot_truth_table() -> dict:
    """All 16 input/output label pairs of a bi-CNOT, read off the state vector."""
    table = {}
    for c, t in itertools.product(_LABELS, repeat=2):
        sv = StateVector.bell_pairs([c, t])
        sv.bicnot(0, 1)
        if abs(sv.norm - 1) > NORM_TOL:
            raise AssertionError("bi-CNOT did not preserve the norm")
        table[(c, t)] = (sv.pair_label(0, tol=NORM_TOL), sv.pair_label(1, tol=NORM_TOL))
    return table


def bicnot_mismatches(table: dict | None = None) -> list:
    """Entries where :func:`hashing.bicnot` disagrees with the table."""
    table = bicnot_truth_table() if table is None else table
    bad = []
    for (c, t), expected in sorted(table.items()):
        nc, nt = hashing.bicnot(PairState(*c), PairState(*t))
        got = ((nc.a, nc.b), (nt.a, nt.b))
        if got != expected:
            bad.append(((c, t), expected, got))
    return bad


# --- tagged pairs under an arbitrary channel --------------------------------


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, (Pauli, str)):
        return PAULI_MATRICES[Pauli(op)]
    return np.asarray(op, dtype=complex)


def validate_channel(channel) -> tuple[np.ndarray, list[np.ndarray]]:
    """Check a mixture ``[(weight, op), ...]`` and return its parts.

    ``op`` is a Pauli name or a 2x2 unitary.  Weights must be non-negative
    and sum to one within 1e-9.
    """
    channel = list(channel)
    if not channel:
        raise ValueError("channel needs at least one branch")
    weights = np.array([float(w) for w, _ in channel])
    ops = [_as_matrix(op) for _, op in channel]
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("channel weights must be non-negative and sum to 1")
    for u in ops:
        if u.shape != (2, 2) or not np.allclose(u.conj().T @ u, np.eye(2), atol=1e-9):
            raise ValueError("every channel branch must be a 2x2 unitary")
    return weights, ops


def random_pauli_channel(rng: np.random.Generator) -> list:
    w = rng.dirichlet(np.ones(4))
    return [(float(x), p) for x, p in zip(w, Pauli)]


def depolarizing_channel() -> list:
    return [(0.25, p) for p in Pauli]


def _branch_outcomes(u: np.ndarray, z: int) -> np.ndarray:
    """Joint X-outcome distribution for |zz> with ``u`` on Bob's qubit."""
    psi = np.zeros((2, 2), dtype=complex)
    psi[z, z] = 1.0
    sv = StateVector(psi.ravel(), 1)
    sv.apply_1q(u, 1)
    sv.h(0)
    sv.h(1)
    return (np.abs(sv.psi) ** 2).ravel()


def tagged_phase_independence(channel, trials: int, rng: np.random.Generator) -> float:
    """X-basis disagreement on Z-tagged pairs after ``channel`` acts on Bob.

    Alice's Z measurement leaves |00> or |11>.  Each trial picks the
    collapse and a channel branch, then samples both X outcomes from the
    exact state vector.  Returns the fraction of trials that disagree.
    """
    weights, ops = validate_channel(channel)
    if trials < 1:
        raise ValueError("trials must be positive")
    dist = np.array([[_branch_outcomes(u, z) for z in (0, 1)] for u in ops])  # (k, 2, 4)
    branch = rng.choice(len(ops), size=trials, p=weights)
    z = rng.integers(0, 2, size=trials)
    cdf = np.cumsum(dist[branch, z], axis=1)
    outcome = (rng.random(trials)[:, None] > cdf).sum(axis=1).clip(max=3)
    xa, xb = outcome >> 1, outcome & 1
    return float(np.mean(xa != xb))


def exact_tagged_disagreement(channel) -> float:
    weights, ops = validate_channel(channel)
    p = 0.0
    for w, u in zip(weights, ops):
        for z in (0, 1):
            d = _branch_outcomes(u, z)
            p += 0.5 * w * (d[1] + d[2])
    return p


# --- exhaustive protocol comparison ----------------------------------------


@dataclass(frozen=True)
class ScriptRound:
    basis: Basis
    subset: tuple[int, ...]
    dest: int


@dataclass
class ProtocolReport:
    n_pairs: int
    cases: int = 0
    agreements: int = 0
    max_norm_error: float = 0.0
    mismatches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cases == self.agreements


def random_script(n: int, n_rounds: int, rng: np.random.Generator) -> list[ScriptRound]:
    """Mixed Z/X rounds that stop while at least two pairs are live."""
    live = list(range(n))
    script = []
    for _ in range(n_rounds):
        if len(live) < 2:
            break
        subset, d = hashing.random_subset(live, rng)
        script.append(ScriptRound(Basis(int(rng.integers(0, 2))), subset, d))
        live.remove(d)
    return script


def _simulate(labels, script) -> tuple[list[int], list[tuple[int, int]], float]:
    sv = StateVector.bell_pairs(labels)
    parities = []
    for rnd in script:
        others = [k for k in rnd.subset if k != rnd.dest]
        if Basis(rnd.basis) is Basis.Z:
            for k in others:
                sv.bicnot(k, rnd.dest)
            parities.append(sv.measure_pair_z(rnd.dest))
        else:
            for w in range(sv.k):
                sv.h(w)
            for k in others:
                sv.bicnot(k, rnd.dest)
            for w in range(sv.k):
                sv.h(w)
            parities.append(sv.measure_pair_x(rnd.dest))
    dead = {rnd.dest for rnd in script}
    survivors = [sv.pair_label(i) for i in range(len(labels)) if i not in dead]
    return parities, survivors, abs(sv.norm - 1)


def _algebra(labels, script) -> tuple[list[int], list[tuple[int, int]]]:
    e = Ensemble([a for a, _ in labels], [b for _, b in labels])
    parities = []
    for rnd in script:
        out, e = hashing.parity_round(e, rnd.basis, rnd.subset, rnd.dest)
        parities.append(out.syndrome)
    live = e.live_indices()
    return parities, [(int(e.a[i]), int(e.b[i])) for i in live]


def exhaustive_protocol_check(n: int, script, max_pairs: int = MAX_PAIRS) -> ProtocolReport:
    """Run ``script`` on all 4^n label assignments in both the label algebra
    and the state vector; compare announced parities and survivor labels."""
    if n > min(max_pairs, MAX_PAIRS):
        raise OracleBudgetExceeded(f"{n} pairs exceeds the limit of {min(max_pairs, MAX_PAIRS)}")
    script = [r if isinstance(r, ScriptRound) else ScriptRound(Basis(r[0]), tuple(r[1]), r[2])
              for r in script]
    report = ProtocolReport(n)
    for labels in itertools.product(_LABELS, repeat=n):
        report.cases += 1
        sim_par, sim_surv, norm_err = _simulate(labels, script)
        alg_par, alg_surv = _algebra(labels, script)
        report.max_norm_error = max(report.max_norm_error, norm_err)
        if sim_par == alg_par and sim_surv == alg_surv and norm_err <= NORM_TOL:
            report.agreements += 1
        elif len(report.mismatches) < 10:
            report.mismatches.append((labels, (sim_par, sim_surv), (alg_par, alg_surv)))
    return report
