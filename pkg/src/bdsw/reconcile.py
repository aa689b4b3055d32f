"""Bit-error correction by Z-basis hashing rounds.

The announced parities of a Z-round schedule form a syndrome ``H e`` of the
bit-flip string ``e`` of the pairs that were live when correction started:
Z rounds never change a survivor's bit label, so every row is simply the
round's subset over those original indices.  Destinations are discarded
right after their round, which makes the destination columns of ``H``
triangular and the system always full rank.

Two desk-scale decoders recover ``e``: exhaustive enumeration of a Hamming
ball, and information-set decoding (Gaussian elimination on random column
orders plus a search over low-weight coset members).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _gf2
from .errors import (
    DecodingAmbiguous,
    EnumerationBudgetExceeded,
    OutOfRadius,
    RankDeficient,
)
from .hashing import CandidateSet, ParityRound, candidate_update, random_subset, z_parity_round
from .pairstate import Ensemble, Sampling, exact_count
from .rates import binary_entropy

DEFAULT_SLACK = 10
EXHAUSTIVE_MAX_COLUMNS = 24
ENUMERATION_BUDGET = 1_000_000
# fixed generator seed for the public structured code; sessions only
# randomise the column permutation
STRUCTURED_CODE_SEED = 0x5EED_C0DE


class MatrixKind(enum.Enum):
    RANDOM = "random"
    STRUCTURED = "structured"


class DecodeStatus(enum.Enum):
    UNIQUE = "unique"
    AMBIGUOUS = "ambiguous"
    OUT_OF_RADIUS = "out_of_radius"
    FAILED = "failed"


@dataclass(frozen=True)
class ParityMatrix:
    """Hashing schedule: one subset mask and destination per round.

    Bit ``j`` of ``rows[i]`` selects pair ``j``.  A destination never appears
    in a later row because it is discarded after its own round.
    """

    rows: tuple[int, ...]
    dests: tuple[int, ...]
    n_cols: int
    kind: MatrixKind = MatrixKind.RANDOM

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(int(r) for r in self.rows))
        object.__setattr__(self, "dests", tuple(int(d) for d in self.dests))
        if len(self.rows) != len(self.dests):
            raise ValueError("one destination per row")
        spent = 0
        for row, d in zip(self.rows, self.dests):
            if row >> self.n_cols:
                raise ValueError("row selects a column beyond n_cols")
            if bin(row).count("1") < 2:
                raise ValueError("every row must select at least two pairs")
            if not (row >> d) & 1:
                raise ValueError(f"destination {d} not in its row")
            if row & spent:
                raise ValueError("row refers to an already discarded destination")
            spent |= 1 << d

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def subsets(self) -> list[tuple[int, ...]]:
        dense = self.dense()
        return [tuple(np.flatnonzero(row).tolist()) for row in dense]

    def dense(self) -> np.ndarray:
        return _gf2.masks_to_matrix(self.rows, self.n_cols)

    def extend(self, other: "ParityMatrix") -> "ParityMatrix":
        if other.n_cols != self.n_cols:
            raise ValueError("column counts differ")
        return ParityMatrix(self.rows + other.rows, self.dests + other.dests, self.n_cols, self.kind)

    def to_text(self) -> str:
        """``n_rows n_cols`` header, then ``<hex mask> <dest>`` per row."""
        lines = [f"{self.n_rows} {self.n_cols}"]
        lines += [f"{row:x} {d}" for row, d in zip(self.rows, self.dests)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, kind: MatrixKind = MatrixKind.RANDOM) -> "ParityMatrix":
        lines = [ln.split() for ln in text.strip().splitlines()]
        n_rows, n_cols = int(lines[0][0]), int(lines[0][1])
        body = lines[1:]
        if len(body) != n_rows:
            raise ValueError(f"header announces {n_rows} rows, found {len(body)}")
        rows, dests = [], []
        for parts in body:
            row = int(parts[0], 16)
            rows.append(row)
            # without an explicit destination use the highest selected index
            dests.append(int(parts[1]) if len(parts) > 1 else row.bit_length() - 1)
        return cls(tuple(rows), tuple(dests), n_cols, kind)


@dataclass
class EcReport:
    rounds_used: int
    decode_status: DecodeStatus
    residual_bit_errors: int
    corrected_positions: tuple[int, ...] = ()
    decoder: str = ""
    message: str = ""
    phase_candidates: CandidateSet | None = field(default=None, repr=False)
    pattern: np.ndarray | None = field(default=None, repr=False)


def ec_round_budget(n: int, delta_b: float, slack: int = 0) -> int:
    """ceil(n H(delta_b)) + slack rounds of Z hashing."""
    if not 0.0 <= delta_b < 0.5:
        raise ValueError(f"delta_b must lie in [0, 1/2), got {delta_b}")
    # round first so n H(delta) that is an integer up to float noise stays put
    return math.ceil(round(n * binary_entropy(delta_b), 9)) + slack


def default_radius(n: int, delta_b: float, sampling: Sampling = Sampling.EXACT) -> int:
    if Sampling(sampling) is Sampling.EXACT:
        return exact_count(delta_b, n)
    return math.ceil(round(1.5 * delta_b * n, 9))


def random_parity_matrix(n_cols: int, n_rows: int, rng: np.random.Generator,
                         live=None) -> ParityMatrix:
    """Draw rows sequentially over the indices still live at each step."""
    live = list(range(n_cols)) if live is None else [int(i) for i in live]
    if n_rows > len(live) - 1:
        raise ValueError(f"{n_rows} rounds need more than {len(live)} live pairs")
    rows, dests = [], []
    pool = np.array(live, dtype=np.intp)
    for _ in range(n_rows):
        subset, d = random_subset(pool, rng)
        rows.append(sum(1 << j for j in subset))
        dests.append(d)
        pool = pool[pool != d]
    return ParityMatrix(tuple(rows), tuple(dests), n_cols, MatrixKind.RANDOM)


def structured_parity_matrix(n_cols: int, n_rows: int, rng: np.random.Generator,
                             live=None) -> ParityMatrix:
    """A fixed public code applied after a uniformly random relabelling.

    The code itself is the row sequence drawn from ``STRUCTURED_CODE_SEED``
    over positions 0..m-1; only the permutation mapping those positions onto
    the live pairs comes from ``rng``.
    """
    live = list(range(n_cols)) if live is None else [int(i) for i in live]
    base = random_parity_matrix(len(live), n_rows, np.random.default_rng(STRUCTURED_CODE_SEED))
    perm = rng.permutation(np.array(live, dtype=np.intp))
    rows = [sum(1 << int(perm[j]) for j in range(len(live)) if (row >> j) & 1)
            for row in base.rows]
    dests = [int(perm[d]) for d in base.dests]
    return ParityMatrix(tuple(rows), tuple(dests), n_cols, MatrixKind.STRUCTURED)


def execute_rounds(e: Ensemble, matrix: ParityMatrix, rng=None, phase_candidates=None):
    """Run one Z round per matrix row.

    Returns ``(ensemble, rounds, phase_candidates)``; the candidate set is
    carried through every round when given.
    """
    if len(e) != matrix.n_cols:
        raise ValueError(f"matrix has {matrix.n_cols} columns, ensemble {len(e)} pairs")
    rounds: list[ParityRound] = []
    for subset, d in zip(matrix.subsets(), matrix.dests):
        rnd, e = z_parity_round(e, subset, d, rng)
        rounds.append(rnd)
        if phase_candidates is not None:
            phase_candidates = candidate_update(phase_candidates, rnd)
    return e, rounds, phase_candidates


def _column_syndromes(matrix: ParityMatrix) -> np.ndarray:
    return _gf2.pack_columns(matrix.dense())


def ball_size(n: int, radius: int) -> int:
    return sum(math.comb(n, w) for w in range(radius + 1))


def decode_exhaustive(parities, matrix: ParityMatrix, radius: int,
                      budget: int = ENUMERATION_BUDGET) -> set[tuple[int, ...]]:
    """Every string of weight <= radius whose syndrome matches ``parities``."""
    n = matrix.n_cols
    if len(parities) != matrix.n_rows:
        raise ValueError("one parity per row")
    if ball_size(n, radius) > budget:
        raise EnumerationBudgetExceeded(
            f"Hamming ball of radius {radius} over {n} bits exceeds {budget} candidates"
        )
    cols = _column_syndromes(matrix)  # (n, words)
    target = _gf2.pack_vector(np.asarray(parities, dtype=np.uint8)) if matrix.n_rows else \
        np.zeros(cols.shape[1], dtype=np.uint64)
    found = set()
    for w in range(radius + 1):
        if w == 0:
            if not target.any():
                found.add((0,) * n)
            continue
        combos = np.array(list(combinations(range(n), w)), dtype=np.intp)
        syn = np.bitwise_xor.reduce(cols[combos], axis=1)
        hits = np.flatnonzero((syn == target).all(axis=1))
        for h in hits:
            s = [0] * n
            for j in combos[h]:
                s[j] = 1
            found.add(tuple(s))
    return found


def _isd_success_probability(n: int, r: int, w: int, p: int = 2, stern: bool = True) -> float:
    """Chance that one iteration exposes a fixed weight-``w`` pattern."""
    k = n - r
    total = math.comb(n, w)
    if total == 0:
        return 1.0
    good = sum(math.comb(r, w - i) * math.comb(k, i) for i in range(min(p, w) + 1))
    prob = good / total
    if stern and p >= 2 and k >= 4:
        prob += _stern_probability(n, r, w, k, _window_size(k, r))
    return min(1.0, prob)


def _iterations_for(n, r, w, p, miss, stern=True):
    prob = _isd_success_probability(n, r, w, p, stern)
    if prob >= 1.0:
        return 1
    if prob <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 / miss) / -math.log1p(-prob))


def decodable_weight(n: int, r: int) -> int:
    """Largest weight whose number of patterns fits into ``r`` parity bits."""
    w = 0
    while w < n and math.log2(math.comb(n, w + 1)) <= r:
        w += 1
    return w


def _stern_pairs(cols_win, cols_rest, syn_win, syn_rest, rng):
    """Stern collision step with two errors in each half of the free columns.

    ``cols_win`` packs each free column's window rows into one integer;
    matches on the window leave the window rows error free.  Returns
    ``(weight, (i, j, k, l))`` for the lightest completions found.
    """
    k = cols_win.size
    order = rng.permutation(k)
    h1, h2 = order[: k // 2], order[k // 2:]
    if h1.size < 2 or h2.size < 2:
        return []
    i1, j1 = np.triu_indices(h1.size, k=1)
    i2, j2 = np.triu_indices(h2.size, k=1)
    a1, b1 = h1[i1], h1[j1]
    a2, b2 = h2[i2], h2[j2]
    key1 = (cols_win[a1] ^ cols_win[b1]).astype(np.intp)
    key2 = (cols_win[a2] ^ cols_win[b2] ^ syn_win).astype(np.intp)
    # counting sort of the right-hand keys; window keys are below 2**ell
    size = int(max(key1.max(), key2.max())) + 1
    counts = np.bincount(key2, minlength=size)
    starts = np.cumsum(counts) - counts
    srt = np.argsort(key2, kind="stable")
    cnt = counts[key1]
    if not cnt.any():
        return []
    left = np.repeat(np.arange(key1.size), cnt)
    offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    right = srt[np.repeat(starts[key1], cnt) + offs]
    resid = syn_rest ^ cols_rest[a1[left]] ^ cols_rest[b1[left]] \
        ^ cols_rest[a2[right]] ^ cols_rest[b2[right]]
    w = _gf2.popcount(resid) + 4
    m = int(w.min())
    hit = np.flatnonzero(w == m)
    return [(m, (int(a1[left[h]]), int(b1[left[h]]), int(a2[right[h]]), int(b2[right[h]])))
            for h in hit]


def _stern_probability(n, r, w, k, ell):
    half = k // 2
    good = math.comb(half, 2) * math.comb(k - half, 2) * math.comb(r - ell, w - 4) if w >= 4 else 0
    return good / math.comb(n, w)


def _window_size(k: int, r: int) -> int:
    half = max(2, k // 2)
    return int(min(max(r - 1, 0), 20, max(1, round(math.log2(math.comb(half, 2))))))


def decode_gaussian(parities, matrix: ParityMatrix, radius: int | None = None, *,
                    rng: np.random.Generator | None = None, p: int = 2, stern: bool = True,
                    miss: float = 0.05, max_iterations: int = 4000) -> np.ndarray:
    """Minimum-weight solution of ``H e = parities`` by information-set search.

    Each iteration puts ``H`` in systematic form on a random column order and
    tests every coset member with at most ``p`` non-pivot errors, plus a
    Stern collision search for two errors in each half of the non-pivot
    columns.  Iterations stop once the best weight found has been searched
    long enough to miss another solution of that weight with probability
    below ``miss``.  A second solution of the same minimum weight raises
    :class:`DecodingAmbiguous`.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    h = matrix.dense()
    s = np.asarray(parities, dtype=np.uint8)
    r, n = h.shape
    if len(s) != r:
        raise ValueError("one parity per row")
    if r == 0 or not s.any():
        return np.zeros(n, dtype=np.uint8)
    _, _, piv, _ = _gf2.systematic_form(h, s, np.arange(n))
    if len(piv) < r:
        raise RankDeficient(f"parity system has rank {len(piv)} < {r} rows")
    radius = n if radius is None else int(radius)
    use_stern = stern and p >= 2
    reachable = min(radius, decodable_weight(n, r))
    if _iterations_for(n, r, reachable, p, miss, use_stern) > 100 * max_iterations:
        prob = max(_isd_success_probability(n, r, reachable, p, use_stern), 1e-300)
        raise EnumerationBudgetExceeded(
            f"information-set search for weight {reachable} in a [{n}, {n - r}] code "
            f"needs ~2^{-math.log2(prob):.0f} iterations"
        )

    best_w = radius
    best: dict[bytes, np.ndarray] = {}
    needed = min(_iterations_for(n, r, radius, p, miss, use_stern), max_iterations)
    it = 0
    while it < needed:
        it += 1
        red, syn, piv, _ = _gf2.systematic_form(h, s, rng.permutation(n))
        piv_arr = np.array(piv, dtype=np.intp)
        free = np.setdiff1d(np.arange(n), piv_arr, assume_unique=True)
        a = red[:, free]
        found = _low_weight_members(a, syn, p, n)
        if use_stern and free.size >= 4:
            ell = _window_size(free.size, r)
            rows = rng.permutation(r)
            win, rest = rows[:ell], rows[ell:]
            shifts = np.arange(ell, dtype=np.uint64)[:, None]
            cols_win = np.bitwise_or.reduce(a[win].astype(np.uint64) << shifts, axis=0)
            syn_win = np.bitwise_or.reduce(syn[win].astype(np.uint64) << shifts[:, 0])
            found += _stern_pairs(cols_win, _gf2.pack_columns(a[rest]), syn_win,
                                  _gf2.pack_vector(syn[rest]), rng)
        m_it = min(w for w, _ in found)
        if m_it > best_w:
            continue
        improved = False
        for w, js in found:
            if w != m_it:
                continue
            e = np.zeros(n, dtype=np.uint8)
            e[piv_arr] = syn
            for j in js:
                e[free[j]] ^= 1
                e[piv_arr] ^= a[:, j]
            if not best or w < best_w:
                best_w, best, improved = w, {}, True
            best[e.tobytes()] = e
        if improved:
            needed = min(_iterations_for(n, r, best_w, p, miss, use_stern), max_iterations)
    if not best:
        if _iterations_for(n, r, radius, p, miss, use_stern) <= max_iterations:
            raise OutOfRadius(f"no pattern of weight <= {radius} matches the syndrome")
        raise EnumerationBudgetExceeded(
            f"no pattern of weight <= {radius} found within {max_iterations} iterations"
        )
    if len(best) > 1:
        raise DecodingAmbiguous(f"{len(best)} patterns of weight {best_w} match",
                                candidates=list(best.values()))
    return next(iter(best.values()))


def _low_weight_members(a: np.ndarray, syn: np.ndarray, p: int, n: int):
    """Lightest coset members with at most ``p`` errors outside the pivots."""
    cols = _gf2.pack_columns(a)
    target = _gf2.pack_vector(syn)
    found = [(int(_gf2.popcount(target)), ())]
    k = a.shape[1]
    if p < 1 or k == 0:
        return found
    x1 = cols ^ target
    w1 = _gf2.popcount(x1) + 1
    m1 = int(w1.min())
    found += [(m1, (int(j),)) for j in np.flatnonzero(w1 == m1)]
    if p < 2 or k < 2:
        return found
    chunk = max(1, 2_000_000 // max(1, k * cols.shape[1]))
    for start in range(0, k - 1, chunk):
        stop = min(k, start + chunk)
        w2 = _gf2.popcount(x1[start:stop, None, :] ^ cols[None, start + 1:, :]) + 2
        # element (i, j) is the pair (start + i, start + 1 + j); keep j >= i
        w2[~np.triu(np.ones(w2.shape, dtype=bool))] = n + 3
        m2 = int(w2.min())
        found += [(m2, (int(i + start), int(j + start + 1))) for i, j in zip(*np.nonzero(w2 == m2))]
    return found


def decode(parities, matrix: ParityMatrix, radius: int, *, decoder: str = "auto", rng=None,
           **kw) -> tuple[np.ndarray, str]:
    """Dispatch to a decoder; returns ``(pattern, decoder_name)``.

    ``auto`` enumerates when the ball is small enough and falls back to
    information-set search otherwise.
    """
    n = matrix.n_cols
    if decoder == "auto":
        small = n <= EXHAUSTIVE_MAX_COLUMNS and ball_size(n, radius) <= ENUMERATION_BUDGET
        decoder = "exhaustive" if small else "gaussian"
    if decoder == "exhaustive":
        found = decode_exhaustive(parities, matrix, radius)
        if not found:
            raise OutOfRadius(f"no pattern of weight <= {radius} matches the syndrome")
        if len(found) > 1:
            raise DecodingAmbiguous(f"{len(found)} patterns within radius {radius}",
                                    candidates=sorted(found))
        return np.array(next(iter(found)), dtype=np.uint8), decoder
    if decoder == "gaussian":
        return decode_gaussian(parities, matrix, radius, rng=rng, **kw), decoder
    raise ValueError(f"unknown decoder {decoder!r}")


def _status_of(exc) -> DecodeStatus:
    if isinstance(exc, DecodingAmbiguous):
        return DecodeStatus.AMBIGUOUS
    if isinstance(exc, OutOfRadius):
        return DecodeStatus.OUT_OF_RADIUS
    return DecodeStatus.FAILED


def correct_bits(e: Ensemble, pattern: np.ndarray) -> tuple[Ensemble, tuple[int, ...]]:
    """Bob flips every live pair the decoded pattern marks."""
    pattern = np.asarray(pattern, dtype=np.uint8)
    flips = pattern.astype(bool) & e.alive
    a = e.a.copy()
    a[flips] ^= 1
    return e.replace(a=a), tuple(int(i) for i in np.flatnonzero(flips))


def run_ec(e: Ensemble, matrix: ParityMatrix, rng=None, *, radius: int | None = None,
           decoder: str = "auto", phase_candidates: CandidateSet | None = None,
           strict: bool = False, decoder_rng=None, **decode_kw):
    """Execute the Z schedule, decode the bit-error string and correct it.

    Returns ``(ensemble, rounds, report)``.  On a decoding failure no
    correction is applied and the report carries the status; with
    ``strict=True`` the decoding exception is raised instead.
    """
    e, rounds, phase_candidates = execute_rounds(e, matrix, rng, phase_candidates)
    parities = [rnd.syndrome for rnd in rounds]
    if radius is None:
        radius = decodable_weight(matrix.n_cols, matrix.n_rows)
    used = decoder
    try:
        pattern, used = decode(parities, matrix, radius, decoder=decoder,
                               rng=decoder_rng, **decode_kw)
    except (DecodingAmbiguous, OutOfRadius, RankDeficient, EnumerationBudgetExceeded) as exc:
        if strict:
            raise
        report = EcReport(len(rounds), _status_of(exc), int(e.a[e.alive].sum()),
                          decoder=used, message=str(exc), phase_candidates=phase_candidates)
        return e, rounds, report
    e, flipped = correct_bits(e, pattern)
    report = EcReport(len(rounds), DecodeStatus.UNIQUE, int(e.a[e.alive].sum()), flipped,
                      decoder=used, phase_candidates=phase_candidates, pattern=pattern)
    return e, rounds, report
