import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symdiff.mixing import eulerian
from symdiff.perm import (Permutation, apply, compose, enumerate_sn, from_json_value, inverse,
                          random_uniform, rising_sequences, to_json_value)


def P(*vals):
    return Permutation.from_one_based(vals)


@st.composite
def perms(draw, n=None):
    n = n or draw(st.integers(1, 8))
    return Permutation(draw(st.permutations(range(n))))


@st.composite
def perm_triples(draw):
    n = draw(st.integers(1, 8))
    return tuple(draw(perms(n)) for _ in range(3))


def test_compose_examples():
    assert compose(Permutation.identity(3), P(2, 3, 1)) == P(2, 3, 1)
    assert compose(P(2, 3, 1), P(2, 3, 1)) == P(3, 1, 2)


def test_compose_pointwise():
    a, b = P(3, 1, 4, 2), P(2, 4, 3, 1)
    c = compose(a, b)
    assert all(c(i) == a(b(i)) for i in range(4))


def test_compose_size_mismatch():
    with pytest.raises(ValueError):
        compose(P(1, 2), P(1, 2, 3))


def test_inverse_examples():
    assert inverse(Permutation.identity(5)) == Permutation.identity(5)
    assert inverse(P(2, 3, 1)) == P(3, 1, 2)


def test_inverse_many_random(rng):
    for _ in range(1000):
        s = random_uniform(int(rng.integers(1, 9)), rng)
        assert compose(s, inverse(s)).is_identity()
        assert compose(inverse(s), s).is_identity()
        assert inverse(inverse(s)) == s


@given(perm_triples())
def test_group_laws(triple):
    a, b, c = triple
    ident = Permutation.identity(a.n)
    assert compose(compose(a, b), c) == compose(a, compose(b, c))
    assert compose(a, ident) == a == compose(ident, a)
    assert compose(a, inverse(a)) == ident


def test_apply_examples():
    X = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert np.array_equal(apply(Permutation.identity(3), X), X)
    ab = np.array([["a"], ["b"]])
    assert apply(P(2, 1), ab).tolist() == [["b"], ["a"]]


def test_apply_row_rule():
    X = np.arange(12.0).reshape(4, 3)
    s = P(3, 1, 4, 2)
    out = apply(s, X)
    for i in range(4):
        assert np.array_equal(out[i], X[s(i)])


def test_apply_size_mismatch():
    with pytest.raises(ValueError):
        apply(P(1, 2, 3), np.zeros((2, 1)))


def test_action_homomorphism_all_s3_pairs():
    X = np.array([[10.0], [20.0], [30.0]])
    for a, b in itertools.product(enumerate_sn(3), repeat=2):
        assert np.array_equal(apply(compose(a, b), X), apply(b, apply(a, X)))


def test_rising_sequence_examples():
    assert rising_sequences(P(1, 4, 2, 5, 3)) == 2
    assert rising_sequences(Permutation.identity(6)) == 1
    assert rising_sequences(P(3, 2, 1)) == 3


@given(perms())
def test_rising_sequence_range(s):
    r = rising_sequences(s)
    assert 1 <= r <= s.n
    assert (r == 1) == s.is_identity()


@pytest.mark.parametrize("n", range(1, 8))
def test_rising_histogram_is_eulerian(n):
    hist = np.bincount([rising_sequences(s) for s in enumerate_sn(n)], minlength=n + 1)[1:]
    assert hist.tolist() == list(eulerian(n, exact=True).counts)


def test_enumerate_sn():
    assert list(enumerate_sn(1)) == [Permutation.identity(1)]
    assert sum(1 for _ in enumerate_sn(4)) == 24
    assert len(set(enumerate_sn(5))) == 120
    assert list(enumerate_sn(4)) == sorted(enumerate_sn(4))
    for bad in (0, 9):
        with pytest.raises(ValueError):
            list(enumerate_sn(bad))


def test_random_uniform(rng):
    assert all(random_uniform(1, rng).is_identity() for _ in range(5))
    a = [random_uniform(6, np.random.default_rng(7)).to_one_based() for _ in range(3)]
    b = [random_uniform(6, np.random.default_rng(7)).to_one_based() for _ in range(3)]
    assert a == b


def test_random_uniform_tv(rng):
    draws = 1_000_000
    counts = {}
    for _ in range(draws):
        key = tuple(random_uniform(3, rng).mapping)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    assert 0.5 * sum(abs(c / draws - 1 / 6) for c in counts.values()) < 0.01


def test_invalid_mapping():
    for bad in ([0, 0, 1], [1, 2, 3], []):
        with pytest.raises(ValueError):
            Permutation(bad)


def test_json_roundtrip():
    s = P(2, 3, 1)
    assert to_json_value(s) == [2, 3, 1]
    assert from_json_value([2, 3, 1]) == s
