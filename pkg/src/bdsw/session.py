"""Two-party sessions: channel, error test, reconciliation, amplification.

Both pictures share one set of random streams, spawned from the session
seed, so a seed fixes everything:

=========  ==============================================================
channel    which pairs carry bit and phase flips, which are tagged
tag        coins for the phase labels of Z-tagged pairs
values     Alice's Z values (her virtual outcomes, or the states she sends)
public     test selection, bases, hashing subsets and destinations
decoder    column orders used by the information-set decoder
private    Alice's X outcomes on test pairs and hashing destinations
=========  ==============================================================

In the entanglement picture the pairs are hashed as pairs and measured at
the end.  In the prepare-and-measure picture Alice sends BB84 states, the
parties measure first and then compress bit strings.  With the same seed
the two produce the same keys.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AbortNoKey, DecodingAmbiguous, DecodingFailed, KeyExhausted
from .hashing import x_parity_round
from .pairstate import Basis, ChannelParams, Ensemble, disclose_tags, sample_ensemble
from .privacy import (
    KeyString,
    PaSchedule,
    lineage_rank_check,
    pa_round_bits,
    pa_rounds_untagged,
    pa_schedule_tagged,
    run_pa,
    untagged_discard_target,
)
from .rates import RateInputs, key_rate, tagged_key_rate
from .reconcile import (
    DEFAULT_SLACK,
    DecodeStatus,
    EcReport,
    MatrixKind,
    ParityMatrix,
    correct_bits,
    decode,
    ec_round_budget,
    execute_rounds,
    random_parity_matrix,
    structured_parity_matrix,
)

MAX_RETRIES = 3
_STREAMS = ("channel", "tag", "values", "public", "decoder", "private")


class Mode(enum.Enum):
    ENTANGLEMENT = "ent"
    PREPARE_MEASURE = "pm"


class Party(enum.Enum):
    ALICE = "alice"
    BOB = "bob"


class MessageKind(enum.Enum):
    BASIS = "basis"
    TEST_OUTCOME = "test_outcome"
    PARITY = "parity"
    SUBSET_ANNOUNCE = "subset_announce"
    DECISION = "decision"


class AbortReason(enum.Enum):
    NO_SIFTED_BITS = "no_sifted_bits"
    RATE_NONPOSITIVE = "rate_nonpositive"
    KEY_EXHAUSTED = "key_exhausted"
    DECODING_FAILED = "decoding_failed"
    KEY_MISMATCH = "key_mismatch"


@dataclass(frozen=True)
class Message:
    sender: Party
    kind: MessageKind
    payload: tuple[int, ...]

    def to_line(self, seq: int) -> str:
        """``seq sender kind nbits:hex``; the bit count keeps leading zeros."""
        n = len(self.payload)
        packed = np.packbits(np.array(self.payload, dtype=np.uint8), bitorder="little")
        value = int.from_bytes(packed.tobytes(), "little")
        width = max(1, (n + 3) // 4)
        return f"{seq} {self.sender.value} {self.kind.value} {n}:{value:0{width}x}"

    @classmethod
    def from_line(cls, line: str) -> tuple[int, "Message"]:
        seq, sender, kind, body = line.split()
        nbits, hexval = body.split(":")
        n, value = int(nbits), int(hexval, 16)
        raw = np.frombuffer(value.to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
        payload = tuple(np.unpackbits(raw, bitorder="little")[:n].tolist())
        return int(seq), cls(Party(sender), MessageKind(kind), payload)


class Transcript:
    """Append-only public record of a session."""

    def __init__(self, messages=()):
        self._messages: list[Message] = list(messages)

    def append(self, sender: Party, kind: MessageKind, payload) -> None:
        bits = np.asarray(payload, dtype=np.uint8).ravel()
        self._messages.append(Message(sender, kind, tuple(bits.tolist())))

    def extend(self, messages) -> None:
        self._messages.extend(messages)

    def __iter__(self):
        return iter(self._messages)

    def __len__(self):
        return len(self._messages)

    def __getitem__(self, i):
        return self._messages[i]

    def __eq__(self, other):
        return isinstance(other, Transcript) and self._messages == other._messages

    def of_kind(self, kind: MessageKind) -> list[Message]:
        return [m for m in self._messages if m.kind is kind]

    def serialize(self) -> str:
        return "".join(m.to_line(i) + "\n" for i, m in enumerate(self._messages))

    @classmethod
    def parse(cls, text: str) -> "Transcript":
        msgs = []
        for expected, line in enumerate(text.splitlines()):
            seq, msg = Message.from_line(line)
            if seq != expected:
                raise ValueError(f"transcript sequence breaks at line {expected}")
            msgs.append(msg)
        return cls(msgs)

    def sha256(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _announce_subset(t: Transcript, subset_pos, dest_pos: int, n: int) -> None:
    mask = np.zeros(n, dtype=np.uint8)
    mask[np.asarray(subset_pos, dtype=np.intp)] = 1
    one_hot = np.zeros(n, dtype=np.uint8)
    one_hot[dest_pos] = 1
    t.append(Party.ALICE, MessageKind.SUBSET_ANNOUNCE, np.concatenate([mask, one_hot]))


@dataclass(frozen=True)
class SessionConfig:
    n_raw: int = 4096
    channel: ChannelParams = field(default_factory=ChannelParams)
    mode: Mode = Mode.ENTANGLEMENT
    test_fraction: float = 0.5
    ec_slack: int = DEFAULT_SLACK
    pa_slack: int = DEFAULT_SLACK
    seed: int = 0
    strict_untagged_discard: bool = False
    # budgets from the test estimates, or from the nominal channel rates
    use_estimates: bool = True
    # "untagged": phase rate over untagged X tests; "pooled": over all of them
    phase_estimate: str = "untagged"
    # how Bob picks bases: "match", "random" (BB84 sifting) or "mismatch"
    bob_basis: str = "match"
    matrix_kind: MatrixKind = MatrixKind.RANDOM
    decoder: str = "auto"
    radius: int | None = None
    max_retries: int = MAX_RETRIES
    raise_on_abort: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "matrix_kind", MatrixKind(self.matrix_kind))
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.n_raw < 4:
            raise ValueError("n_raw must leave at least two pairs after the test")
        if min(self.ec_slack, self.pa_slack, self.max_retries) < 0:
            raise ValueError("slack and retry counts must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned value")
        if self.phase_estimate not in ("untagged", "pooled"):
            raise ValueError("phase_estimate must be 'untagged' or 'pooled'")
        if self.bob_basis not in ("match", "random", "mismatch"):
            raise ValueError("bob_basis must be 'match', 'random' or 'mismatch'")


@dataclass(frozen=True)
class TestEstimates:
    delta_b: float
    delta_p: float
    pooled_delta_p: float
    n_z_tests: int
    n_x_tests: int
    n_x_untagged: int


@dataclass
class SessionResult:
    key_alice: list[int]
    key_bob: list[int]
    agreed: bool
    transcript: Transcript
    realized_rate: float
    estimates: tuple[float, float]
    abort_reason: AbortReason | None = None
    n_post_test: int = 0
    ec_rounds: int = 0
    pa_rounds: int = 0
    pa_schedule: PaSchedule | None = None
    formula_rate: float | None = None
    test: TestEstimates | None = None
    ec_report: EcReport | None = None
    lineage_ok: bool | None = None
    flags: tuple[str, ...] = ()
    message: str = ""

    @property
    def key_length(self) -> int:
        return len(self.key_alice)


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(_STREAMS, children)}


def _bob_bases(alice_bases: np.ndarray, policy: str, rng) -> np.ndarray:
    if policy == "match":
        return alice_bases.copy()
    if policy == "mismatch":
        return 1 - alice_bases
    return rng.integers(0, 2, size=alice_bases.size, dtype=np.uint8)


def error_test(e: Ensemble, fraction: float, rng: np.random.Generator,
               private_rng: np.random.Generator | None = None, *,
               bob_basis: str = "match", phase_estimate: str = "untagged"):
    """Sacrifice a uniform ``fraction`` of the live pairs to estimate error rates.

    Tags are already fixed when the test pairs are drawn.  A tagged test
    pair is measured in its tag basis, an untagged one in a random basis;
    key pairs are measured in Z.  Pairs whose bases differ between the
    parties are dropped (sifting).  X-tagged pairs outside the test carry no
    Z key bit and are dropped too.  Returns ``(estimates, ensemble, messages)``.
    """
    if e.alice is None:
        raise ValueError("the error test needs Alice's values on the ensemble")
    live = e.live_indices()
    n_test = int(round(fraction * live.size))
    if n_test < 2:
        raise ValueError("test set must hold at least two pairs")
    private_rng = private_rng if private_rng is not None else rng
    is_test = np.zeros(len(e), dtype=bool)
    is_test[rng.choice(live, size=n_test, replace=False)] = True
    coins = rng.integers(0, 2, size=len(e), dtype=np.uint8)
    alice_basis = np.where(e.tagged, e.tag_basis, coins).astype(np.uint8)
    alice_basis[~is_test] = Basis.Z
    bob_basis_arr = _bob_bases(alice_basis, bob_basis, rng)
    outcome_x = private_rng.integers(0, 2, size=len(e), dtype=np.uint8)

    msgs = Transcript()
    msgs.append(Party.ALICE, MessageKind.BASIS, alice_basis[live])
    msgs.append(Party.BOB, MessageKind.BASIS, bob_basis_arr[live])
    sifted = e.alive & (alice_basis == bob_basis_arr)
    tests = np.flatnonzero(sifted & is_test)
    z_tests = tests[alice_basis[tests] == Basis.Z]
    x_tests = tests[alice_basis[tests] == Basis.X]
    alice_out = np.where(alice_basis[tests] == Basis.Z, e.alice[tests], outcome_x[tests])
    flips = np.where(alice_basis[tests] == Basis.Z, e.a[tests], e.b[tests])
    msgs.append(Party.ALICE, MessageKind.TEST_OUTCOME, alice_out)
    msgs.append(Party.BOB, MessageKind.TEST_OUTCOME, alice_out ^ flips)

    if z_tests.size == 0 or x_tests.size == 0:
        raise AbortNoKey("no test pairs survived sifting in one of the bases")
    x_untagged = x_tests[~e.tagged[x_tests]]
    delta_b = float(e.a[z_tests].mean())
    pooled = float(e.b[x_tests].mean())
    if phase_estimate == "pooled":
        delta_p = pooled
    elif x_untagged.size:
        delta_p = float(e.b[x_untagged].mean())
    else:
        raise AbortNoKey("no untagged X test pairs to estimate the phase rate")
    est = TestEstimates(delta_b, delta_p, pooled, int(z_tests.size), int(x_tests.size),
                        int(x_untagged.size))

    drop = e.alive & (~sifted | is_test | (e.tagged & (e.tag_basis == Basis.X)))
    return est, e.discard(np.flatnonzero(drop)), list(msgs)


def _compact(e: Ensemble) -> Ensemble:
    live = e.alive
    return Ensemble(e.a[live], e.b[live], e.tagged[live], e.tag_basis[live],
                    alice=e.alice[live])


def _budget_inputs(cfg: SessionConfig, est: TestEstimates) -> tuple[float, float]:
    if cfg.use_estimates:
        return est.delta_b, est.delta_p
    return cfg.channel.delta_b, cfg.channel.delta_p


def _formula_rate(delta_b: float, delta_p: float, delta: float) -> float:
    inp = RateInputs(delta_b, delta_p, delta)
    return tagged_key_rate(inp)[0] if delta > 0 else key_rate(inp)


def _radius(cfg: SessionConfig, n: int, delta_b: float) -> int:
    if cfg.radius is not None:
        return cfg.radius
    # estimates drift from the pool's true count, so leave room either way
    return max(1, math.ceil(1.5 * delta_b * n))


def _draw_matrix(cfg: SessionConfig, n_cols: int, n_rows: int, rng, live=None) -> ParityMatrix:
    make = structured_parity_matrix if cfg.matrix_kind is MatrixKind.STRUCTURED \
        else random_parity_matrix
    return make(n_cols, n_rows, rng, live=live)


class _Aborted(Exception):
    def __init__(self, reason: AbortReason, message: str, exc: Exception | None = None):
        super().__init__(message)
        self.reason = reason
        self.exc = exc


def _reconcile(cfg, pool: Ensemble, bob_bits: np.ndarray, budget: int, radius: int,
               rngs, t: Transcript):
    """Shared EC driver.

    ``pool`` holds the labels in the entanglement picture; in the other
    picture only Bob's measured bits matter and the labels are not touched.
    Returns ``(pool, bob_bits, matrix, report)``.
    """
    n = len(pool)
    if budget > n - 2:
        raise _Aborted(AbortReason.KEY_EXHAUSTED, f"{budget} EC rounds leave no key from {n} bits")
    ent = cfg.mode is Mode.ENTANGLEMENT
    alice = pool.alice
    matrix = _draw_matrix(cfg, n, budget, rngs["public"])
    pending = matrix
    parities: list[int] = []
    live = np.ones(n, dtype=bool)
    retries = 0
    while True:
        for subset, d in zip(pending.subsets(), pending.dests):
            pos = np.flatnonzero(live)
            _announce_subset(t, np.searchsorted(pos, subset), int(np.searchsorted(pos, d)), pos.size)
        if ent:
            pool, rounds, _ = execute_rounds(pool, pending)
            pa = [r.parity_alice for r in rounds]
            pb = [r.parity_bob for r in rounds]
        else:
            pa = [int(np.bitwise_xor.reduce(alice[list(s)])) for s in pending.subsets()]
            pb = [int(np.bitwise_xor.reduce(bob_bits[list(s)])) for s in pending.subsets()]
        for x, y in zip(pa, pb):
            t.append(Party.ALICE, MessageKind.PARITY, [x])
            t.append(Party.BOB, MessageKind.PARITY, [y])
        parities += [x ^ y for x, y in zip(pa, pb)]
        live[list(pending.dests)] = False
        try:
            pattern, used = decode(parities, matrix, radius, decoder=cfg.decoder,
                                   rng=rngs["decoder"])
            break
        except DecodingAmbiguous as exc:
            if retries >= cfg.max_retries or cfg.ec_slack == 0 or live.sum() - cfg.ec_slack < 2:
                t.append(Party.BOB, MessageKind.DECISION, [0])
                raise _Aborted(AbortReason.DECODING_FAILED, str(exc), exc)
            retries += 1
            pending = _draw_matrix(cfg, n, cfg.ec_slack, rngs["public"], live=np.flatnonzero(live))
            matrix = matrix.extend(pending)
        except DecodingFailed as exc:
            t.append(Party.BOB, MessageKind.DECISION, [0])
            raise _Aborted(AbortReason.DECODING_FAILED, str(exc), exc)
    t.append(Party.BOB, MessageKind.DECISION, [1])
    if ent:
        pool, flipped = correct_bits(pool, pattern)
        residual = int(pool.a[pool.alive].sum())
    else:
        bob_bits = bob_bits ^ pattern
        flipped = tuple(int(i) for i in np.flatnonzero(pattern & live))
        residual = int((bob_bits ^ alice)[live].sum())
    report = EcReport(matrix.n_rows, DecodeStatus.UNIQUE, residual, flipped, decoder=used)
    return pool, bob_bits, matrix, report


def _keystring(bits, tags, keep) -> KeyString:
    k = KeyString.fresh(bits, tags)
    return KeyString(k.bits[keep], k.origin_tags[keep], k.lineage[keep], k.n_orig)


def run_session(cfg: SessionConfig) -> SessionResult:
    """Run one session in the configured picture; see the module docstring."""
    rngs = _streams(cfg.seed)
    t = Transcript()
    result = SessionResult([], [], False, t, 0.0, (float("nan"), float("nan")))
    try:
        _run(cfg, rngs, t, result)
    except _Aborted as exc:
        result.abort_reason = exc.reason
        result.message = str(exc)
        result.key_alice, result.key_bob = [], []
        result.realized_rate = 0.0
        if cfg.raise_on_abort:
            raise (exc.exc or AbortNoKey(str(exc))) from exc
    except AbortNoKey as exc:
        result.abort_reason = (AbortReason.KEY_EXHAUSTED if isinstance(exc, KeyExhausted)
                               else AbortReason.RATE_NONPOSITIVE)
        if "sifting" in str(exc):
            result.abort_reason = AbortReason.NO_SIFTED_BITS
        result.message = str(exc)
        result.key_alice, result.key_bob = [], []
        result.realized_rate = 0.0
        if cfg.raise_on_abort:
            raise
    return verify_agreement(result)


def run_prepare_measure(cfg: SessionConfig) -> SessionResult:
    if cfg.mode is not Mode.PREPARE_MEASURE:
        raise ValueError("run_prepare_measure needs mode=PREPARE_MEASURE")
    return run_session(cfg)


def _run(cfg: SessionConfig, rngs, t: Transcript, result: SessionResult) -> None:
    ch = cfg.channel
    e = sample_ensemble(ch, cfg.n_raw, rngs["channel"])
    e = disclose_tags(e, rngs["tag"])
    x = rngs["values"].integers(0, 2, size=cfg.n_raw, dtype=np.uint8)
    e = e.replace(alice=x)

    est, e, msgs = error_test(e, cfg.test_fraction, rngs["public"], rngs["private"],
                              bob_basis=cfg.bob_basis, phase_estimate=cfg.phase_estimate)
    t.extend(msgs)
    result.test = est
    result.estimates = (est.delta_b, est.delta_p)
    pool = _compact(e)
    n = len(pool)
    result.n_post_test = n
    if n < 2:
        raise _Aborted(AbortReason.NO_SIFTED_BITS, f"only {n} key pairs survived")

    db, dp = _budget_inputs(cfg, est)
    delta = ch.tag_fraction
    rate = _formula_rate(db, dp, delta)  # AbortNoKey past the tagged edge
    result.formula_rate = rate
    if rate <= 0:
        raise _Aborted(AbortReason.RATE_NONPOSITIVE, f"formula rate {rate:.4f} leaves no key")

    budget = ec_round_budget(n, db, cfg.ec_slack)
    bob_bits = pool.alice ^ pool.a  # Bob's Z outcomes
    pool, bob_bits, matrix, report = _reconcile(
        cfg, pool, bob_bits, budget, _radius(cfg, n, db), rngs, t)
    result.ec_report = report
    result.ec_rounds = matrix.n_rows

    if delta > 0:
        schedule = pa_schedule_tagged(n, dp, delta, db, slack=cfg.pa_slack,
                                      ec_rounds=matrix.n_rows)
    else:
        n_p = pa_rounds_untagged(n, dp, cfg.pa_slack)
        schedule = PaSchedule(n_p, 0, n_p)
    result.pa_schedule = schedule
    target = untagged_discard_target(n, dp, delta) if cfg.strict_untagged_discard else None

    keep = np.ones(n, dtype=bool)
    keep[list(matrix.dests)] = False
    k_alice = _keystring(pool.alice, pool.tagged, keep)
    log: list = []
    try:
        k_alice = run_pa(k_alice, schedule, rngs["public"], untagged_target=target, log=log)
    except KeyExhausted as exc:
        raise _Aborted(AbortReason.KEY_EXHAUSTED, str(exc)) from exc
    result.pa_rounds = len(log)

    if cfg.mode is Mode.ENTANGLEMENT:
        for rnd in log:
            live = pool.live_indices()
            _announce_subset(t, rnd.subset, rnd.dest, live.size)
            _, pool = x_parity_round(pool, live[list(rnd.subset)], int(live[rnd.dest]),
                                     rngs["private"])
        live = pool.alive
        key_alice = pool.alice[live]
        key_bob = pool.alice[live] ^ pool.a[live]
    else:
        k_bob = _keystring(bob_bits, pool.tagged, keep)
        for rnd in log:
            _announce_subset(t, rnd.subset, rnd.dest, len(k_bob))
            k_bob = pa_round_bits(k_bob, rnd.subset, rnd.dest)
        key_alice = k_alice.bits
        key_bob = k_bob.bits

    result.key_alice = [int(v) for v in key_alice]
    result.key_bob = [int(v) for v in key_bob]
    result.realized_rate = len(result.key_alice) / n
    if delta > 0:
        result.lineage_ok = lineage_rank_check(k_alice, np.flatnonzero(~pool.tagged))
        if not result.lineage_ok:
            result.flags += ("degenerate_lineage",)


def verify_agreement(r: SessionResult) -> SessionResult:
    """Compare the keys bit by bit and record the outcome on ``r``."""
    r.agreed = r.key_alice == r.key_bob
    if not r.key_alice and "empty_key" not in r.flags:
        r.flags += ("empty_key",)
    if not r.agreed and r.abort_reason is None:
        r.abort_reason = AbortReason.KEY_MISMATCH
    return r
