import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symdiff import kernels
from symdiff.perm import Permutation, apply, enumerate_sn, rising_sequences, sn_array
from symdiff.shuffles import (ShuffleKind, Trajectory, chain_orders, forward_trajectory, insertion,
                              pmf_one_step, pmf_rs_tstep, pmf_rs_tstep_exact, riffle_geometric,
                              riffle_gsr, rs_log_pmf_by_rises, sample_orders, sample_rs_geometric,
                              sample_rs_gsr, sample_step, sample_steps)


def P(*vals):
    return Permutation.from_one_based(vals)


def empirical(perms, n):
    counts = np.bincount(kernels.perm_rank(perms), minlength=math.factorial(n))
    return counts / len(perms)


def exact(kind, n):
    return np.array([pmf_one_step(kind, s) for s in enumerate_sn(n)])


def tv(p, q):
    return 0.5 * np.abs(p - q).sum()


def test_rt_frequencies(rng):
    freq = empirical(sample_steps("RT", 3, 1_000_000, rng), 3)
    want = exact(ShuffleKind.RT, 3)
    assert want[0] == pytest.approx(1 / 3)
    assert sorted(want) == pytest.approx([0, 0, 2 / 9, 2 / 9, 2 / 9, 1 / 3])
    assert tv(freq, want) < 0.01


def test_ri_frequencies(rng):
    freq = empirical(sample_steps("RI", 3, 300_000, rng), 3)
    support = [kernels.perm_rank(insertion(3, i)[None])[0] for i in range(3)]
    assert freq[support] == pytest.approx([1 / 3] * 3, abs=0.01)
    assert freq.sum() == pytest.approx(freq[support].sum())


def test_rs_n1_is_identity(rng):
    for _ in range(5):
        assert sample_step("RS", 1, rng).is_identity()
        assert sample_rs_geometric(1, rng).is_identity()
        assert sample_rs_gsr(1, rng).is_identity()


def test_geometric_sampler_n4_against_pmf(rng):
    assert tv(empirical(riffle_geometric(4, 1_000_000, rng), 4), exact(ShuffleKind.RS, 4)) < 0.01


def test_geometric_vs_gsr_n5(rng):
    a = empirical(riffle_geometric(5, 1_000_000, rng), 5)
    b = empirical(riffle_gsr(5, 1_000_000, rng), 5)
    assert tv(a, b) < 0.01


def test_one_step_pmf_examples():
    assert pmf_one_step("RS", Permutation.identity(3)) == 0.5
    assert pmf_one_step("RS", P(3, 2, 1)) == 0.0
    assert pmf_one_step("RT", P(2, 1, 3)) == pytest.approx(2 / 9)
    assert pmf_one_step("RT", P(2, 3, 1)) == 0.0
    assert pmf_one_step("RI", P(3, 1, 2)) == pytest.approx(1 / 3)
    assert pmf_one_step("RI", P(2, 1, 3)) == 0.0


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("kind", list(ShuffleKind))
def test_one_step_pmf_normalised(kind, n):
    assert math.fsum(exact(kind, n)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", range(1, 8))
def test_rs_support_size(n):
    assert int((exact(ShuffleKind.RS, n) > 0).sum()) == 2 ** n - n


def test_tstep_examples():
    for s in enumerate_sn(4):
        assert pmf_rs_tstep(s, 1) == pytest.approx(pmf_one_step("RS", s), abs=1e-15)
    assert pmf_rs_tstep_exact(Permutation.identity(3), 2) == Fraction(20, 64)
    assert pmf_rs_tstep(Permutation.identity(3), 2) == pytest.approx(0.3125)


def test_tstep_two_fold_convolution_s3():
    perms = list(enumerate_sn(3))
    conv = {s: Fraction(0) for s in perms}
    one = {s: Fraction(math.comb(5 - rising_sequences(s), 3), 8) for s in perms}
    for a in perms:
        for b in perms:
            conv[Permutation(a.mapping[b.mapping])] += one[a] * one[b]
    for s in perms:
        assert conv[s] == pmf_rs_tstep_exact(s, 2)


def test_tstep_zero_is_delta():
    for s in enumerate_sn(4):
        assert pmf_rs_tstep_exact(s, 0) == (1 if s.is_identity() else 0)


@pytest.mark.parametrize("n", range(1, 7))
def test_tstep_normalised(n):
    perms = sn_array(n)
    rises = kernels.rising_sequences(perms)
    for t in range(11):
        assert math.fsum(np.exp(rs_log_pmf_by_rises(n, t))[rises - 1]) == pytest.approx(1.0, abs=1e-12)


def test_tstep_log_form_large():
    lp = rs_log_pmf_by_rises(100, 15)
    assert np.all(np.isfinite(lp))
    assert lp[0] > lp[-1]
    assert rs_log_pmf_by_rises(10, 1)[2:].max() == -np.inf


def test_trajectory_t0(rng):
    tr = forward_trajectory(np.arange(4.0), "RS", 0, rng)
    assert tr.T == 0 and len(tr.states) == 1 and tr.move_perms == []


@given(st.sampled_from(list(ShuffleKind)), st.integers(1, 7), st.integers(0, 6), st.integers(0, 10**6))
def test_trajectory_invariant(kind, n, T, seed):
    rng = np.random.default_rng(seed)
    x0 = np.random.default_rng(seed + 1).normal(size=(n, 2))
    tr = forward_trajectory(x0, kind, T, rng)
    states = tr.states
    assert len(states) == T + 1 and len(tr.move_perms) == T
    for t in range(1, T + 1):
        assert np.array_equal(states[t], apply(tr.move_perms[t - 1], states[t - 1]))


def test_trajectory_json_roundtrip(rng):
    tr = forward_trajectory(np.arange(5.0), "RI", 4, rng)
    doc = tr.to_json(include_states=True)
    assert set(doc) == {"kind", "T", "moves", "x0", "states"}
    assert set(tr.to_json()) == {"kind", "T", "moves"}
    back = Trajectory.from_json(doc)
    assert back.kind is ShuffleKind.RI and np.array_equal(back.moves, tr.moves)


def test_rs_mixes_to_uniform(rng):
    final = sample_orders("RS", 5, 10, 100_000, rng)[:, -1]
    assert tv(empirical(final, 5), np.full(120, 1 / 120)) < 0.02


def test_chain_orders_matches_apply(rng):
    moves = sample_steps("RT", 6, 8, rng).reshape(2, 4, 6)
    orders = chain_orders(moves)
    X = np.arange(6.0)
    for b in range(2):
        cur = X
        for t in range(4):
            cur = apply(Permutation(moves[b, t]), cur)
            assert np.array_equal(cur, X[orders[b, t + 1]])
