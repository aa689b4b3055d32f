import numpy as np
import pytest

from bdsw import hashing, oracle
from bdsw.oracle import (
    MAX_QUBITS,
    NORM_TOL,
    OracleBudgetExceeded,
    ScriptRound,
    StateVector,
)
from bdsw.pairstate import Basis, Pauli

LABELS = [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_truth_table_has_sixteen_entries():
    table = oracle.bicnot_truth_table()
    assert len(table) == 16
    assert table[((0, 0), (0, 0))] == ((0, 0), (0, 0))


def test_truth_table_matches_label_algebra():
    assert oracle.bicnot_mismatches() == []


def test_truth_table_independent_hand_entries():
    # bit flips flow control -> target, phase flips target -> control
    table = oracle.bicnot_truth_table()
    assert table[((1, 0), (0, 0))] == ((1, 0), (1, 0))
    assert table[((0, 0), (0, 1))] == ((0, 1), (0, 1))
    assert table[((1, 1), (1, 1))] == ((1, 0), (0, 1))


def test_mismatch_report_names_entry(monkeypatch):
    def wrong(c, t):
        return c, t

    monkeypatch.setattr(hashing, "bicnot", wrong)
    bad = oracle.bicnot_mismatches()
    assert bad and bad[0][0] in oracle.bicnot_truth_table()


@pytest.mark.parametrize("c, t", [(c, t) for c in LABELS for t in LABELS])
def test_bicnot_outputs_are_exact_bell_states(c, t):
    sv = StateVector.bell_pairs([c, t])
    sv.bicnot(0, 1)
    amps = np.abs(sv.psi.ravel())
    assert set(np.round(amps[amps > 1e-12], 12)) == {0.5}
    assert abs(sv.norm - 1) < NORM_TOL


def test_bell_pair_labels_round_trip():
    for lab in LABELS:
        assert StateVector.bell_pairs([lab]).pair_label(0) == lab


def test_state_vector_budget():
    with pytest.raises(OracleBudgetExceeded):
        StateVector.bell_pairs([(0, 0)] * (MAX_QUBITS // 2 + 1))
    with pytest.raises(ValueError):
        StateVector(np.ones(3))


def test_non_bell_state_is_reported():
    sv = StateVector.bell_pairs([(0, 0)])
    sv.h(0)
    with pytest.raises(ValueError):
        sv.pair_label(0)


# --- tagged pairs ---


def test_identity_channel_is_exactly_half():
    assert oracle.exact_tagged_disagreement([(1.0, Pauli.I)]) == pytest.approx(0.5, abs=1e-12)


def test_depolarizing_channel_is_exactly_half():
    assert oracle.exact_tagged_disagreement(oracle.depolarizing_channel()) == \
        pytest.approx(0.5, abs=1e-12)


def test_rotation_branch_is_half():
    theta = 0.37
    u = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    ch = [(0.6, u), (0.4, Pauli.Y)]
    assert oracle.exact_tagged_disagreement(ch) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_pauli_channels_sample_half(seed):
    rng = np.random.default_rng(seed)
    ch = oracle.random_pauli_channel(rng)
    trials = 20000
    frac = oracle.tagged_phase_independence(ch, trials, rng)
    assert abs(frac - 0.5) < 5 * np.sqrt(0.25 / trials)


@pytest.mark.parametrize("channel", [
    [],
    [(0.5, Pauli.X)],
    [(1.2, Pauli.X), (-0.2, Pauli.Z)],
    [(1.0, np.array([[1, 1], [0, 1]]))],
])
def test_invalid_channels(channel):
    with pytest.raises(ValueError):
        oracle.validate_channel(channel)


def test_trials_must_be_positive():
    with pytest.raises(ValueError):
        oracle.tagged_phase_independence(oracle.depolarizing_channel(), 0,
                                         np.random.default_rng(0))


# --- exhaustive protocol check ---


def test_two_pairs_single_z_round():
    rep = oracle.exhaustive_protocol_check(2, [ScriptRound(Basis.Z, (0, 1), 1)])
    assert rep.passed and rep.cases == 16


def test_three_pairs_mixed_rounds():
    script = [ScriptRound(Basis.Z, (0, 1, 2), 2), ScriptRound(Basis.X, (0, 1), 0)]
    rep = oracle.exhaustive_protocol_check(3, script)
    assert rep.passed and rep.cases == 64
    assert rep.max_norm_error <= NORM_TOL


def test_tuple_scripts_are_accepted():
    rep = oracle.exhaustive_protocol_check(2, [(1, (0, 1), 0)])
    assert rep.passed


def test_empty_script():
    rep = oracle.exhaustive_protocol_check(3, [])
    assert rep.passed and rep.cases == 64


@pytest.mark.parametrize("seed", range(6))
def test_random_scripts_agree(seed):
    rng = np.random.default_rng(seed)
    n = 3 if seed % 2 else 4
    rep = oracle.exhaustive_protocol_check(n, oracle.random_script(n, n - 1, rng))
    assert rep.passed, rep.mismatches[:2]


def test_broken_algebra_is_caught(monkeypatch):
    real = hashing.x_parity_round

    def no_backward(e, r, d, rng=None):
        rnd, out = real(e, r, d, rng)
        return rnd, out.replace(a=e.a)

    monkeypatch.setattr(hashing, "x_parity_round", no_backward)
    script = [ScriptRound(Basis.X, (0, 1), 1)]
    rep = oracle.exhaustive_protocol_check(2, script)
    assert not rep.passed and rep.mismatches


def test_protocol_budget():
    with pytest.raises(OracleBudgetExceeded):
        oracle.exhaustive_protocol_check(4, [], max_pairs=3)
    with pytest.raises(OracleBudgetExceeded):
        oracle.exhaustive_protocol_check(7, [])
