"""Hot inner loops over batches of permutations.

Every kernel exists twice: an explicit-loop version (compiled by numba unless
``SYMDIFF_NO_JIT`` is set) and a vectorised numpy version.  Both consume the
same pre-drawn randomness, so for equal inputs they return equal outputs; the
module-level names dispatch to whichever backend is active.

All permutation arrays are 0-based one-line notation, shape ``(m, n)``.
"""
import math

import numpy as np

from ._jit import BACKEND, JIT_ENABLED, njit

__all__ = [
    "BACKEND",
    "IMPLEMENTATIONS",
    "riffle_interleave",
    "riffle_geometric",
    "rising_sequences",
    "perm_rank",
    "gumbel_plackett_luce",
]


MAX_RANK_N = 20


# -- GSR riffle shuffle: binomial cut, then drop with probability A/(A+B) ----

@njit
def _riffle_interleave_loops(cuts, drops):
    m, n = drops.shape
    out = np.empty((m, n), dtype=np.int64)
    for r in range(m):
        a = cuts[r]
        b = n - a
        li = 0
        ri = cuts[r]
        for p in range(n):
            if drops[r, p] * (a + b) < a:
                out[r, p] = li
                li += 1
                a -= 1
            else:
                out[r, p] = ri
                ri += 1
                b -= 1
    return out


def _riffle_interleave_numpy(cuts, drops):
    m, n = drops.shape
    a = np.asarray(cuts, dtype=np.int64).copy()
    b = n - a
    li = np.zeros(m, dtype=np.int64)
    ri = a.copy()
    out = np.empty((m, n), dtype=np.int64)
    for p in range(n):
        left = drops[:, p] * (a + b) < a
        out[:, p] = np.where(left, li, ri)
        li += left
        ri += ~left
        a -= left
        b -= ~left
    return out


# -- geometric description: sort the doubled fractional parts ---------------

@njit
def _riffle_geometric_loops(points):
    m, n = points.shape
    out = np.empty((m, n), dtype=np.int64)
    xs = np.empty(n)
    keys = np.empty(n)
    for r in range(m):
        if n <= 32:
            # insertion sort into a reused buffer; cheaper than np.sort for small n
            for p in range(n):
                v = points[r, p]
                q = p
                while q > 0 and xs[q - 1] > v:
                    xs[q] = xs[q - 1]
                    q -= 1
                xs[q] = v
        else:
            xs[:] = np.sort(points[r])
        c = 0
        for p in range(n):
            keys[p] = 2.0 * xs[p] - math.floor(2.0 * xs[p])
            if xs[p] < 0.5:
                c += 1
        i = 0
        j = c
        for p in range(n):
            # ties go to the lower original index
            if j >= n or (i < c and keys[i] <= keys[j]):
                out[r, p] = i
                i += 1
            else:
                out[r, p] = j
                j += 1
    return out


def _riffle_geometric_numpy(points):
    xs = np.sort(points, axis=1)
    keys = 2.0 * xs - np.floor(2.0 * xs)
    return np.argsort(keys, axis=1, kind="stable").astype(np.int64)


# -- rising sequences: 1 + number of descents of the inverse -----------------

@njit
def _rising_sequences_loops(perms):
    m, n = perms.shape
    out = np.empty(m, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    for r in range(m):
        for i in range(n):
            pos[perms[r, i]] = i
        count = 1
        for v in range(n - 1):
            if pos[v + 1] < pos[v]:
                count += 1
        out[r] = count
    return out


def _rising_sequences_numpy(perms):
    pos = np.argsort(perms, axis=1)
    return 1 + (np.diff(pos, axis=1) < 0).sum(axis=1).astype(np.int64)


# -- lexicographic rank (index into enumerate_sn order) ----------------------

@njit
def _perm_rank_loops(perms):
    m, n = perms.shape
    fact = np.ones(n, dtype=np.int64)
    for i in range(1, n):
        fact[i] = fact[i - 1] * i
    out = np.zeros(m, dtype=np.int64)
    for r in range(m):
        rank = 0
        for i in range(n):
            less = 0
            for j in range(i + 1, n):
                if perms[r, j] < perms[r, i]:
                    less += 1
            rank += less * fact[n - 1 - i]
        out[r] = rank
    return out


def _perm_rank_numpy(perms):
    m, n = perms.shape
    out = np.zeros(m, dtype=np.int64)
    for i in range(n - 1):
        less = (perms[:, i + 1:] < perms[:, i:i + 1]).sum(axis=1)
        out += less * math.factorial(n - 1 - i)
    return out


# -- (generalised) Plackett-Luce via Gumbel-max without replacement ----------

@njit
def _gumbel_plackett_luce_loops(scores, gumbel):
    # scores: (ms, n, n) with ms in {1, m}; gumbel: (m, n, n)
    m, n, _ = gumbel.shape
    ms = scores.shape[0]
    out = np.empty((m, n), dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    for r in range(m):
        s = scores[r if ms > 1 else 0]
        used[:] = False
        for i in range(n):
            best = -np.inf
            arg = -1
            for j in range(n):
                if not used[j]:
                    v = s[i, j] + gumbel[r, i, j]
                    if arg < 0 or v > best:
                        best = v
                        arg = j
            out[r, i] = arg
            used[arg] = True
    return out


def _gumbel_plackett_luce_numpy(scores, gumbel):
    m, n, _ = gumbel.shape
    vals = scores + gumbel
    used = np.zeros((m, n), dtype=bool)
    out = np.empty((m, n), dtype=np.int64)
    rows = np.arange(m)
    for i in range(n):
        v = np.where(used, -np.inf, vals[:, i, :])
        choice = np.argmax(v, axis=1)
        out[:, i] = choice
        used[rows, choice] = True
    return out


IMPLEMENTATIONS = {
    "riffle_interleave": (_riffle_interleave_loops, _riffle_interleave_numpy),
    "riffle_geometric": (_riffle_geometric_loops, _riffle_geometric_numpy),
    "rising_sequences": (_rising_sequences_loops, _rising_sequences_numpy),
    "perm_rank": (_perm_rank_loops, _perm_rank_numpy),
    "gumbel_plackett_luce": (_gumbel_plackett_luce_loops, _gumbel_plackett_luce_numpy),
}

_pick = 0 if JIT_ENABLED else 1


def riffle_interleave(cuts, drops):
    """Interleave packets ``[0, cut)`` and ``[cut, n)`` using drop uniforms."""
    cuts = np.ascontiguousarray(cuts, dtype=np.int64)
    drops = np.ascontiguousarray(drops, dtype=np.float64)
    return IMPLEMENTATIONS["riffle_interleave"][_pick](cuts, drops)


def riffle_geometric(points):
    """Riffle permutations from uniform points in [0, 1), one row per draw."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    return IMPLEMENTATIONS["riffle_geometric"][_pick](points)


def rising_sequences(perms):
    perms = np.ascontiguousarray(np.atleast_2d(perms), dtype=np.int64)
    return IMPLEMENTATIONS["rising_sequences"][_pick](perms)


def perm_rank(perms):
    """Position of each permutation in lexicographic order (0-based, n <= 20)."""
    perms = np.ascontiguousarray(np.atleast_2d(perms), dtype=np.int64)
    if perms.shape[1] > MAX_RANK_N:
        raise ValueError(f"ranks overflow int64 for n > {MAX_RANK_N}")
    return IMPLEMENTATIONS["perm_rank"][_pick](perms)


def gumbel_plackett_luce(scores, gumbel):
    """Row ``i`` of ``scores`` picks output ``i`` among unused columns.

    ``scores`` has shape ``(n, n)`` or ``(m, n, n)``; ``gumbel`` is ``(m, n, n)``
    standard Gumbel noise.  Passing identical rows gives ordinary PL.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 2:
        scores = scores[None]
    scores = np.ascontiguousarray(scores)
    gumbel = np.ascontiguousarray(gumbel, dtype=np.float64)
    return IMPLEMENTATIONS["gumbel_plackett_luce"][_pick](scores, gumbel)
