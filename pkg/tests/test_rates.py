import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp, mpf
from mpmath import log as mlog

from bdsw.errors import AbortNoKey
from bdsw.rates import (
    RateInputs,
    binary_entropy,
    doubling_rule_exponent,
    is_positive,
    key_rate,
    likely_count_exponents,
    tagged_key_rate,
)

mp.dps = 40


def h_mp(x):
    x = mpf(x)
    if x in (0, 1):
        return mpf(0)
    return -x * mlog(x, 2) - (1 - x) * mlog(1 - x, 2)


def test_entropy_examples():
    assert binary_entropy(0) == 0 and binary_entropy(1) == 0
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0.11) == pytest.approx(0.499916, abs=1e-6)


@given(st.floats(0, 1))
def test_entropy_matches_high_precision(x):
    assert binary_entropy(x) == pytest.approx(float(h_mp(x)), abs=1e-9)


@given(st.floats(0, 1))
def test_entropy_symmetry(x):
    assert binary_entropy(x) == pytest.approx(binary_entropy(1 - x), abs=1e-12)


def test_entropy_increasing():
    xs = np.linspace(0, 0.5, 501)
    hs = [binary_entropy(x) for x in xs]
    assert all(b > a for a, b in zip(hs, hs[1:]))


def test_entropy_domain():
    with pytest.raises(ValueError):
        binary_entropy(-0.1)
    with pytest.raises(ValueError):
        binary_entropy(1.5)


def test_likely_counts():
    assert likely_count_exponents(RateInputs(0, 0, 0, 100)) == (0, 0, 0)
    wb, wp, wu = likely_count_exponents(RateInputs(0.05, 0.05, 0.0, 1000))
    assert wu == pytest.approx(wp) and wb == pytest.approx(1000 * binary_entropy(0.05))
    _, _, wu = likely_count_exponents(RateInputs(0.05, 0.05, 0.1, 1000))
    assert wu == pytest.approx(306.4, abs=0.1)
    assert wu == pytest.approx(float(mpf("0.99") * 1000 * h_mp(mpf("0.05") / mpf("0.9"))), abs=1e-9)


def test_doubling_rule_is_separate():
    inp = RateInputs(0.05, 0.05, 0.1, 1000)
    n_b = 1000 * binary_entropy(0.05)
    expected = 0.9 * 1000 * binary_entropy(0.05 / 0.9) + 0.1 * n_b
    assert doubling_rule_exponent(inp, n_b) == pytest.approx(expected)
    assert doubling_rule_exponent(inp, n_b) != pytest.approx(likely_count_exponents(inp)[2])


def test_key_rate_examples():
    assert key_rate(RateInputs(0, 0)) == 1
    assert key_rate(RateInputs(0.05, 0.05)) == pytest.approx(0.42721, abs=1e-5)
    assert key_rate(RateInputs(0.11, 0.11)) == pytest.approx(1.7e-4, abs=1e-5)


def test_key_rate_can_go_negative():
    r = key_rate(RateInputs(0.2, 0.2))
    assert r < 0 and not is_positive(r)


def test_tagged_rate_examples():
    rf, q, l_frac = tagged_key_rate(RateInputs(0.05, 0.05, 0.1))
    assert rf == pytest.approx(0.3358, abs=1e-3)
    hq = binary_entropy(0.05 / 0.9)
    assert l_frac == pytest.approx(1.1 * hq)
    assert q == pytest.approx(1 - binary_entropy(0.05) - 1.1 * hq)
    # the two-phase schedule leaves (1 - delta) q
    assert rf == pytest.approx((1 - 0.1) * q, abs=1e-12)
    assert tagged_key_rate(RateInputs(0, 0, 0.2))[0] == pytest.approx(0.8)


def test_tagged_rate_domain_edge():
    with pytest.raises(AbortNoKey):
        tagged_key_rate(RateInputs(0.05, 0.3, 0.4))


@given(st.floats(0, 0.499), st.floats(0, 0.499))
def test_delta_zero_reduction(db, dp):
    inp = RateInputs(db, dp, 0.0)
    assert tagged_key_rate(inp)[0] == pytest.approx(key_rate(inp), abs=1e-12)


def test_monotonicity_grid():
    grid = np.linspace(0, 0.2, 11)
    deltas = np.linspace(0, 0.3, 7)
    for db in grid:
        for dp in grid:
            rs = [tagged_key_rate(RateInputs(db, dp, d))[0] for d in deltas]
            assert all(b <= a + 1e-12 for a, b in zip(rs, rs[1:]))
    for d in deltas:
        for dp in grid:
            rs = [tagged_key_rate(RateInputs(db, dp, d))[0] for db in grid]
            assert all(b <= a + 1e-12 for a, b in zip(rs, rs[1:]))
        for db in grid:
            rs = [tagged_key_rate(RateInputs(db, dp, d))[0] for dp in grid]
            assert all(b <= a + 1e-12 for a, b in zip(rs, rs[1:]))


def test_rate_inputs_validate():
    with pytest.raises(ValueError):
        RateInputs(0.5, 0)
    with pytest.raises(ValueError):
        RateInputs(0, 0, 1.0)
