import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdsw.pairstate import (
    BELL_LABELS,
    Basis,
    ChannelParams,
    Ensemble,
    PairState,
    Pauli,
    Sampling,
    apply_pauli,
    bell_label,
    disclose_tags,
    exact_count,
    label_bits,
    sample_ensemble,
    strings,
)

bits = st.integers(0, 1)


def test_apply_pauli_examples():
    assert apply_pauli(PairState(0, 0), Pauli.I) == PairState(0, 0)
    assert apply_pauli(PairState(0, 0), Pauli.X) == PairState(1, 0)
    assert apply_pauli(PairState(0, 0), "Y") == PairState(1, 1)
    assert apply_pauli(PairState(0, 0), Pauli.Z) == PairState(0, 1)


def test_apply_pauli_keeps_tags():
    p = PairState(0, 1, tagged=True, tag_basis=Basis.X)
    q = apply_pauli(p, Pauli.Y)
    assert (q.a, q.b, q.tagged, q.tag_basis) == (1, 0, True, Basis.X)


@given(bits, bits)
def test_x_then_z_is_y(a, b):
    p = PairState(a, b)
    assert apply_pauli(apply_pauli(p, Pauli.X), Pauli.Z) == apply_pauli(p, Pauli.Y)


@given(bits, bits)
def test_label_bijection(a, b):
    assert label_bits(bell_label(a, b)) == (a, b)
    assert PairState.from_label(bell_label(a, b)) == PairState(a, b)


def test_bell_label_table():
    assert BELL_LABELS == {(0, 0): "phi+", (0, 1): "phi-", (1, 0): "psi+", (1, 1): "psi-"}


def test_pairstate_rejects_bad_input():
    with pytest.raises(ValueError):
        PairState(2, 0)
    with pytest.raises(ValueError):
        PairState(0, 0, tagged=False, tag_basis=Basis.Z)


def test_strings_example():
    e = Ensemble.from_labels(["phi+", "phi+", "psi+", "phi-", "psi-"])
    assert strings(e) == ("00101", "00011")


def test_strings_empty_and_all_psi_minus():
    assert strings(Ensemble([], [])) == ("", "")
    assert strings(Ensemble.from_labels(["psi-"] * 3)) == ("111", "111")


def test_strings_skip_discarded():
    e = Ensemble.from_labels(["psi+", "phi-", "psi-"]).discard([1])
    assert strings(e) == ("11", "01")


def test_discard_is_one_way():
    e = Ensemble.from_labels(["phi+", "phi+"]).discard([0])
    with pytest.raises(ValueError):
        e.discard([0])


def test_ensemble_is_read_only():
    e = Ensemble.from_labels(["phi+"])
    with pytest.raises(ValueError):
        e.a[0] = 1


def test_sample_noiseless():
    e = sample_ensemble(ChannelParams(), 5, np.random.default_rng(0))
    assert strings(e) == ("00000", "00000")


def test_sample_exact_counts():
    e = sample_ensemble(ChannelParams(0.2, 0.4), 5, np.random.default_rng(1))
    sb, sp = strings(e)
    assert sb.count("1") == 1 and sp.count("1") == 2


def test_sample_rejects_empty():
    with pytest.raises(ValueError):
        sample_ensemble(ChannelParams(), 0, np.random.default_rng(0))


def test_bernoulli_concentration():
    n = 10_000
    # rates are capped below 1/2, so sample at the edge
    p = 0.4999
    e = sample_ensemble(ChannelParams(p, 0.0, sampling=Sampling.BERNOULLI), n,
                        np.random.default_rng(2))
    assert abs(e.a.mean() - p) <= 5 * math.sqrt(p * (1 - p) / n)


@given(st.floats(0, 0.49), st.floats(0, 0.49), st.floats(0, 0.9), st.integers(1, 300),
       st.integers(0, 2 ** 32), st.booleans())
def test_exact_mode_weights(db, dp, tag, n, seed, correlate):
    params = ChannelParams(db, dp, tag, correlate=correlate)
    e = sample_ensemble(params, n, np.random.default_rng(seed))
    sb, sp = strings(e)
    assert sb.count("1") == exact_count(db, n)
    assert sp.count("1") == exact_count(dp, n)
    assert int(e.tagged.sum()) == exact_count(tag, n)
    assert not e.tag_basis[~e.tagged].any()


def test_correlated_placement_overlaps():
    e = sample_ensemble(ChannelParams(0.2, 0.1, correlate=True), 100, np.random.default_rng(3))
    assert np.all(e.a[e.b == 1] == 1)


def test_exact_count_is_robust_to_round_off():
    assert exact_count(0.29, 100) == 29
    assert exact_count(0.1, 24) == 2


def test_channel_params_validate():
    with pytest.raises(ValueError):
        ChannelParams(delta_b=0.5)
    with pytest.raises(ValueError):
        ChannelParams(tag_fraction=1.0)
    assert ChannelParams(sampling="bernoulli").sampling is Sampling.BERNOULLI


def test_fixed_tag_basis():
    e = sample_ensemble(ChannelParams(tag_fraction=0.5, tag_basis=Basis.X), 20,
                        np.random.default_rng(0))
    assert np.all(e.tag_basis[e.tagged] == Basis.X)


def test_disclose_tags_model():
    rng = np.random.default_rng(5)
    e = sample_ensemble(ChannelParams(0.0, 0.3, tag_fraction=0.6), 2000, rng)
    d = disclose_tags(e, rng)
    x_tag = d.tagged & (d.tag_basis == Basis.X)
    z_tag = d.tagged & (d.tag_basis == Basis.Z)
    assert not d.b[x_tag].any()
    assert np.array_equal(d.b[~d.tagged], e.b[~e.tagged])
    assert abs(d.b[z_tag].mean() - 0.5) < 5 * math.sqrt(0.25 / z_tag.sum())
