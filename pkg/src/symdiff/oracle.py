"""Brute-force checks over all of S_n for small n.

Every check enumerates S_n (``n <= 6``) and compares a library routine with
an independent computation: integer group convolutions for the t-step
riffle pmf, exhaustive pile assignments for the inverse riffle, explicit
draw-order sums for inverse transpositions, and so on.
"""
import functools
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .mixing import eulerian, tv_rs_between, tv_rs_to_uniform
from .perm import Permutation, apply, compose, sn_array
from .reverse import (ReverseKind, ReverseParams, delta_gpl, enumerate_log_probs,
                      inverse_insertion, log_prob_batch, top_k)
from .shuffles import ShuffleKind, insertion, pmf_one_step, pmf_rs_tstep_exact, transposition

ORACLE_MAX_N = 6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


@functools.lru_cache(maxsize=None)
def _sn(n):
    return _Sn(n)


class _Sn:
    """All of S_n with a rank-indexed composition table."""

    def __init__(self, n):
        self.n = n
        self.perms = sn_array(n)
        m = len(self.perms)
        # comp[a, b] = rank(perms[a][perms[b]])
        composed = self.perms[:, self.perms].reshape(m * m, n)
        self.comp = kernels.perm_rank(composed).reshape(m, m)
        self.rises = kernels.rising_sequences(self.perms)

    def rank(self, mapping):
        return int(kernels.perm_rank(np.asarray(mapping, dtype=np.int64)[None])[0])


def _gsr_counts(n):
    """Multiplicity of each permutation over the 2^n equally likely GSR pile words."""
    counts = {}
    for word in itertools.product((1, 0), repeat=n):
        cut = sum(word)
        left, right = iter(range(cut)), iter(range(cut, n))
        perm = tuple(next(left) if w else next(right) for w in word)
        counts[perm] = counts.get(perm, 0) + 1
    return counts


def _rs_tstep_counts(sn, t):
    """``2^(tn) q^(t)`` as exact integers by repeated group convolution."""
    n = sn.n
    one = np.zeros(len(sn.perms), dtype=np.int64)
    for perm, c in _gsr_counts(n).items():
        one[sn.rank(perm)] = c
    supp = np.flatnonzero(one)
    dist = np.zeros(len(sn.perms), dtype=np.int64)
    dist[0] = 1
    for _ in range(t):
        nxt = np.zeros_like(dist)
        live = np.flatnonzero(dist)
        np.add.at(nxt, sn.comp[np.ix_(live, supp)], dist[live, None] * one[None, supp])
        dist = nxt
    return dist


def _check_pmf_normalization(sn, rng):
    worst = 0.0
    for kind in ShuffleKind:
        total = math.fsum(pmf_one_step(kind, Permutation(p)) for p in sn.perms)
        worst = max(worst, abs(total - 1.0))
    return worst < 1e-12, f"max |sum - 1| = {worst:.2e}"


def _check_one_step_pmfs(sn, rng):
    n = sn.n
    counts = {k: np.zeros(len(sn.perms)) for k in ShuffleKind}
    for i, j in itertools.product(range(n), repeat=2):
        counts[ShuffleKind.RT][sn.rank(transposition(n, i, j))] += 1.0 / n ** 2
    for i in range(n):
        counts[ShuffleKind.RI][sn.rank(insertion(n, i))] += 1.0 / n
    for perm, c in _gsr_counts(n).items():
        counts[ShuffleKind.RS][sn.rank(perm)] += c / 2.0 ** n
    worst = max(
        abs(pmf_one_step(kind, Permutation(p)) - counts[kind][r])
        for kind in ShuffleKind for r, p in enumerate(sn.perms)
    )
    return worst < 1e-12, f"max abs error {worst:.2e}"


def _check_rs_support(sn, rng):
    size = sum(pmf_one_step(ShuffleKind.RS, Permutation(p)) > 0 for p in sn.perms)
    want = 2 ** sn.n - sn.n
    return size == want, f"support {size}, expected {want}"


def _check_rs_tstep(sn, rng, t_max=8):
    bad = []
    for t in range(t_max + 1):
        counts = _rs_tstep_counts(sn, t)
        for r, p in enumerate(sn.perms):
            if Fraction(int(counts[r]), 2 ** (t * sn.n)) != pmf_rs_tstep_exact(Permutation(p), t):
                bad.append(t)
                break
    return not bad, "exact match for t <= %d" % t_max if not bad else f"mismatch at t={bad}"


def _check_eulerian(sn, rng):
    hist = np.bincount(sn.rises, minlength=sn.n + 1)[1:]
    want = np.array(eulerian(sn.n, exact=True).counts)
    return bool(np.array_equal(hist, want)), f"histogram {hist.tolist()}"


def _check_tv_formulas(sn, rng, t_max=8):
    n = sn.n
    dists = [_rs_tstep_counts(sn, t) for t in range(t_max + 1)]
    u = Fraction(1, math.factorial(n))
    worst = 0.0
    for t in range(t_max + 1):
        pt = [Fraction(int(c), 2 ** (t * n)) for c in dists[t]]
        exact_u = sum(abs(x - u) for x in pt) / 2
        worst = max(worst, abs(float(exact_u) - tv_rs_to_uniform(n, t)))
        for t2 in range(t + 1, t_max + 1):
            q = [Fraction(int(c), 2 ** (t2 * n)) for c in dists[t2]]
            exact = sum(abs(x - y) for x, y in zip(pt, q)) / 2
            worst = max(worst, abs(float(exact) - tv_rs_between(n, t, t2)))
    return worst < 1e-12, f"max abs error {worst:.2e}"


def _random_params(kind, n, rng):
    if kind is ReverseKind.GPL:
        return ReverseParams(kind, rng.normal(0, 2, (n, n)))
    tau = float(rng.normal()) if kind is ReverseKind.IT else None
    return ReverseParams(kind, rng.normal(0, 2, n), tau)


def _check_reverse_normalization(sn, rng):
    worst = 0.0
    for kind in ReverseKind:
        _, lp = enumerate_log_probs(_random_params(kind, sn.n, rng))
        worst = max(worst, abs(math.fsum(np.exp(lp).tolist()) - 1.0))
    return worst < 1e-10, f"max |sum - 1| = {worst:.2e}"


def _check_inverse_transposition(sn, rng):
    n = sn.n
    p = _random_params(ReverseKind.IT, n, rng)
    soft = np.exp(p.scores - logsumexp(p.scores))
    move = 1.0 / (1.0 + math.exp(-p.tau))
    want = np.zeros(len(sn.perms))
    want[0] = 1.0 - move
    # ordered draws (i then j) without replacement
    for i, j in itertools.permutations(range(n), 2):
        want[sn.rank(transposition(n, i, j))] += move * soft[i] * soft[j] / (1.0 - soft[i])
    got = np.exp(log_prob_batch(p, sn.perms))
    return np.abs(got - want).max() < 1e-12, f"max abs error {np.abs(got - want).max():.2e}"


def _check_inverse_insertion(sn, rng):
    n = sn.n
    p = _random_params(ReverseKind.II, n, rng)
    soft = np.exp(p.scores - logsumexp(p.scores))
    want = np.zeros(len(sn.perms))
    for i in range(n):
        want[sn.rank(inverse_insertion(n, i))] += soft[i]
    got = np.exp(log_prob_batch(p, sn.perms))
    return np.abs(got - want).max() < 1e-12, f"max abs error {np.abs(got - want).max():.2e}"


def _check_irs_preimages(sn, rng):
    n = sn.n
    p = _random_params(ReverseKind.IRS, n, rng)
    left = 1.0 / (1.0 + np.exp(-p.scores))
    want = np.zeros(len(sn.perms))
    for bits in itertools.product((True, False), repeat=n):
        b = np.array(bits)
        perm = np.concatenate([np.flatnonzero(b), np.flatnonzero(~b)])
        want[sn.rank(perm)] += np.prod(np.where(b, left, 1.0 - left))
    got = np.exp(log_prob_batch(p, sn.perms))
    return np.abs(got - want).max() < 1e-12, f"max abs error {np.abs(got - want).max():.2e}"


def _check_top_k(sn, rng):
    n, full = sn.n, len(sn.perms)
    k = min(5, full)
    for kind in (ReverseKind.PL, ReverseKind.GPL):
        p = _random_params(kind, n, rng)
        perms, lp = enumerate_log_probs(p)
        want = sorted(zip(-lp, map(tuple, perms)))[:k]
        got = top_k(p, k, inner_beam=full)
        if [w[1] for w in want] != [tuple(g[0].mapping) for g in got]:
            return False, f"{kind.value} top-{k} differs"
        if not np.allclose([-w[0] for w in want], [g[1] for g in got], atol=1e-12, rtol=0):
            return False, f"{kind.value} top-{k} log-probs differ"
    return True, f"PL and GPL top-{k} exact with inner beam {full}"


def _check_delta_gpl(sn, rng):
    worst = 1.0
    for _ in range(5):
        sigma = Permutation(rng.permutation(sn.n))
        prob = math.exp(log_prob_batch(delta_gpl(sigma, 30.0), sigma.mapping[None])[0])
        worst = min(worst, prob)
    return worst > 1 - 1e-9, f"min mass at target {worst:.12f}"


def _check_pl_mode(sn, rng):
    p = _random_params(ReverseKind.PL, sn.n, rng)
    perms, lp = enumerate_log_probs(p)
    mode = perms[np.argmax(lp)]
    want = np.argsort(-p.scores, kind="stable")
    return bool(np.array_equal(mode, want)), f"mode {(mode + 1).tolist()}"


def _check_gpl_equal_rows(sn, rng):
    s = rng.normal(0, 2, sn.n)
    a = log_prob_batch(ReverseParams(ReverseKind.PL, s), sn.perms)
    b = log_prob_batch(ReverseParams(ReverseKind.GPL, np.tile(s, (sn.n, 1))), sn.perms)
    return np.abs(a - b).max() < 1e-12, f"max abs error {np.abs(a - b).max():.2e}"


def _check_action(sn, rng):
    X = np.arange(sn.n, dtype=np.float64)[:, None] * 10.0
    sub = sn.perms[: min(len(sn.perms), 24)]
    for a, b in itertools.product(sub, repeat=2):
        pa, pb = Permutation(a), Permutation(b)
        if not np.array_equal(apply(compose(pa, pb), X), apply(pb, apply(pa, X))):
            return False, "apply(compose(a, b), X) != apply(b, apply(a, X))"
    return True, "apply(compose(a, b), X) == apply(b, apply(a, X))"


CHECKS = {
    "one_step_pmf_normalization": _check_pmf_normalization,
    "one_step_pmf_brute_force": _check_one_step_pmfs,
    "riffle_support_size": _check_rs_support,
    "riffle_tstep_convolution": _check_rs_tstep,
    "eulerian_rising_histogram": _check_eulerian,
    "tv_formulas": _check_tv_formulas,
    "reverse_normalization": _check_reverse_normalization,
    "inverse_transposition_pmf": _check_inverse_transposition,
    "inverse_insertion_pmf": _check_inverse_insertion,
    "inverse_riffle_preimage_sums": _check_irs_preimages,
    "top_k_exactness": _check_top_k,
    "delta_gpl_concentration": _check_delta_gpl,
    "pl_mode_is_argsort": _check_pl_mode,
    "gpl_equal_rows_is_pl": _check_gpl_equal_rows,
    "action_homomorphism": _check_action,
}


def run_oracles(n_max, seed=0, names=None):
    """Run every check for ``n = 2..n_max``; returns a list of ``CheckResult``."""
    if not 2 <= n_max <= ORACLE_MAX_N:
        raise ValueError(f"n_max must lie in [2, {ORACLE_MAX_N}]")
    names = list(CHECKS) if names is None else list(names)
    results = []
    for name in names:
        rng = np.random.default_rng(seed)
        passed, details = True, []
        for n in range(2, n_max + 1):
            ok, detail = CHECKS[name](_sn(n), rng)
            passed &= bool(ok)
            details.append(f"n={n}: {detail}")
        results.append(CheckResult(name, passed, "; ".join(details)))
    return results
