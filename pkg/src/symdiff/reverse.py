"""Reverse-transition distributions over S_n.

Five families:

* ``IT``  - inverse transposition: identity with prob ``1 - sigmoid(tau)``,
  otherwise an unordered pair picked by two softmax draws without replacement.
* ``II``  - inverse insertion: move component ``i`` to the end, ``i ~ softmax(s)``.
* ``IRS`` - inverse riffle: object ``i`` goes to the left pile with prob
  ``sigmoid(s_i)``; left pile is stacked over right pile.
* ``PL``  - Plackett-Luce with scores ``s``.
* ``GPL`` - generalised PL; row ``i`` of ``S`` scores the choice of the
  component placed at output position ``i``.

A permutation ``sigma`` drawn from any family acts by ``apply(sigma, X)``.
All probabilities are accumulated in log space.
"""
import heapq
import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import log_expit, logsumexp

from . import kernels
from .perm import Permutation, sn_array

SCORE_FLOOR = -1e4
IRS_ENUMERATE_MAX_N = 12


class ReverseKind(str, Enum):
    IT = "IT"
    II = "II"
    IRS = "IRS"
    PL = "PL"
    GPL = "GPL"


def as_reverse_kind(kind):
    return kind if isinstance(kind, ReverseKind) else ReverseKind(str(kind).upper())


@dataclass(frozen=True, eq=False)
class ReverseParams:
    kind: ReverseKind
    scores: np.ndarray
    tau: float = None

    def __post_init__(self):
        kind = as_reverse_kind(self.kind)
        s = np.maximum(np.array(self.scores, dtype=np.float64), SCORE_FLOOR)
        if not np.all(np.isfinite(s)):
            raise ValueError("scores must be finite")
        if kind is ReverseKind.GPL:
            if s.ndim != 2 or s.shape[0] != s.shape[1]:
                raise ValueError(f"GPL needs an n x n score matrix, got shape {s.shape}")
        elif s.ndim != 1:
            raise ValueError(f"{kind.value} needs a score vector, got shape {s.shape}")
        if kind is ReverseKind.IT:
            if self.tau is None or not np.isfinite(self.tau):
                raise ValueError("IT needs a finite tau")
            object.__setattr__(self, "tau", float(self.tau))
        elif self.tau is not None:
            raise ValueError(f"{kind.value} takes no tau")
        s.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "scores", s)

    @property
    def n(self):
        return self.scores.shape[0]

    @classmethod
    def from_raw(cls, kind, raw):
        """Build from a network head output (IT packs ``tau`` last)."""
        kind = as_reverse_kind(kind)
        raw = np.asarray(raw, dtype=np.float64)
        if kind is ReverseKind.IT:
            return cls(kind, raw[:-1], float(raw[-1]))
        return cls(kind, raw)

    def to_json(self):
        if self.kind is ReverseKind.GPL:
            return {"kind": "GPL", "S": self.scores.tolist()}
        doc = {"kind": self.kind.value, "s": self.scores.tolist()}
        if self.kind is ReverseKind.IT:
            doc["tau"] = self.tau
        return doc

    @classmethod
    def from_json(cls, doc):
        kind = as_reverse_kind(doc["kind"])
        if kind is ReverseKind.GPL:
            return cls(kind, doc["S"])
        return cls(kind, doc["s"], doc.get("tau"))


# -- supports of the inverse-shuffle families -------------------------------

def inverse_insertion(n, i):
    """Move component ``i`` (0-based) to the end."""
    return np.concatenate([np.arange(i), np.arange(i + 1, n), [i]]).astype(np.int64)


def support(kind, n):
    """The finite support of IT, II or IRS as an ``(m, n)`` array."""
    kind = as_reverse_kind(kind)
    if kind is ReverseKind.IT:
        rows = [np.arange(n)]
        for i, j in itertools.combinations(range(n), 2):
            m = np.arange(n)
            m[i], m[j] = j, i
            rows.append(m)
        return np.array(rows, dtype=np.int64)
    if kind is ReverseKind.II:
        return np.array([inverse_insertion(n, i) for i in range(n)], dtype=np.int64)
    if kind is ReverseKind.IRS:
        rows = {tuple(range(n))}
        for bits in itertools.product((True, False), repeat=n):
            b = np.array(bits)
            rows.add(tuple(np.concatenate([np.flatnonzero(b), np.flatnonzero(~b)])))
        return np.array(sorted(rows), dtype=np.int64)
    raise ValueError(f"{kind.value} has full support S_n")


# -- log-probabilities ------------------------------------------------------

def _gpl_log_prob(S, perms):
    n = S.shape[0]
    # G[b, i, j] = S[i, perms[b, j]]
    G = S[np.arange(n)[None, :, None], perms[:, None, :]]
    later = np.arange(n)[None, :] > np.arange(n)[:, None]
    chosen = np.take_along_axis(S[None], perms[:, :, None], axis=2)[..., 0]
    # -log(1 + sum_{later} exp(G - chosen)), via log1p when the chosen score
    # dominates so that probabilities within 1e-16 of one keep their gap
    d = np.where(later[None], G - chosen[:, :, None], -np.inf)
    top = np.maximum(d.max(axis=2), 0.0)
    with np.errstate(under="ignore"):
        rest = np.exp(d - top[..., None]).sum(axis=2)
        norm = np.where(top > 0, top + np.log(rest + np.exp(-top)), np.log1p(rest))
    return -norm.sum(axis=1)


def _it_log_prob(s, tau, perms):
    m, n = perms.shape
    out = np.full(m, -np.inf)
    ident = np.arange(n)
    is_id = np.all(perms == ident, axis=1)
    # with a single object the "move" is a no-op and lands on Id as well
    out[is_id] = log_expit(-tau) if n >= 2 else 0.0
    moved = perms != ident
    is_swap = (moved.sum(axis=1) == 2) & ~is_id
    if n < 2 or not is_swap.any():
        return out
    idx = np.flatnonzero(is_swap)
    pos = np.argsort(~moved[idx], axis=1, kind="stable")[:, :2]
    i, j = pos[:, 0], pos[:, 1]
    ok = perms[idx, i] == j
    lse = logsumexp(s)
    rest = np.array([logsumexp(np.delete(s, k)) for k in range(n)])
    first_i = s[i] + s[j] - lse - rest[i]
    first_j = s[j] + s[i] - lse - rest[j]
    vals = log_expit(tau) + np.logaddexp(first_i, first_j)
    out[idx[ok]] = vals[ok]
    return out


def _ii_log_prob(s, perms):
    m, n = perms.shape
    logp = s - logsumexp(s)
    last = perms[:, -1]
    expected = np.array([inverse_insertion(n, i) for i in range(n)])[last]
    return np.where(np.all(perms == expected, axis=1), logp[last], -np.inf)


def _irs_log_prob(s, perms):
    m, n = perms.shape
    left, right = log_expit(s), log_expit(-s)
    out = np.full(m, -np.inf)
    descents = (np.diff(perms, axis=1) < 0).sum(axis=1)
    is_id = descents == 0
    # identity: any prefix [0, c) left and the rest right gives the same deck
    cum_left = np.concatenate([[0.0], np.cumsum(left)])
    cum_right = np.concatenate([np.cumsum(right[::-1])[::-1], [0.0]])
    out[is_id] = logsumexp(cum_left + cum_right)
    one = np.flatnonzero(descents == 1)
    if one.size:
        cut = np.argmax(np.diff(perms[one], axis=1) < 0, axis=1) + 1
        in_left = np.arange(n)[None, :] < cut[:, None]
        bits = np.zeros((one.size, n), dtype=bool)
        np.put_along_axis(bits, perms[one], in_left, axis=1)
        out[one] = np.where(bits, left, right).sum(axis=1)
    return out


def log_prob_batch(params, perms):
    """Log-probabilities of the rows of ``perms`` (``(m, n)`` int array)."""
    perms = np.atleast_2d(np.asarray(perms, dtype=np.int64))
    if perms.shape[1] != params.n:
        raise ValueError(f"permutation size {perms.shape[1]} != parameter size {params.n}")
    kind, s = params.kind, params.scores
    if kind is ReverseKind.GPL:
        return _gpl_log_prob(s, perms)
    if kind is ReverseKind.PL:
        return _gpl_log_prob(np.broadcast_to(s, (s.size, s.size)), perms)
    if kind is ReverseKind.IT:
        return _it_log_prob(s, params.tau, perms)
    if kind is ReverseKind.II:
        return _ii_log_prob(s, perms)
    return _irs_log_prob(s, perms)


def log_prob(params, sigma):
    return float(log_prob_batch(params, sigma.mapping[None])[0])


def enumerate_log_probs(params):
    """``(perms, log_probs)`` over all of S_n (n <= 8)."""
    perms = sn_array(params.n)
    return perms, log_prob_batch(params, perms)


# -- sampling ---------------------------------------------------------------

def _categorical(logits, size, rng):
    g = rng.gumbel(size=(size, logits.shape[-1]))
    return np.argmax(logits + g, axis=-1)


def sample_batch(params, size, rng):
    """``size`` independent draws as an ``(size, n)`` int array."""
    kind, s, n = params.kind, params.scores, params.n
    if kind in (ReverseKind.PL, ReverseKind.GPL):
        S = np.broadcast_to(s, (n, n)) if kind is ReverseKind.PL else s
        return kernels.gumbel_plackett_luce(S, rng.gumbel(size=(size, n, n)))
    if kind is ReverseKind.II:
        i = _categorical(s, size, rng)
        return np.array([inverse_insertion(n, k) for k in range(n)], dtype=np.int64)[i]
    if kind is ReverseKind.IRS:
        bits = rng.random((size, n)) < np.exp(log_expit(s))
        # stable sort on "not left" puts the left pile (in order) first
        return np.argsort(~bits, axis=1, kind="stable").astype(np.int64)
    out = np.tile(np.arange(n, dtype=np.int64), (size, 1))
    move = rng.random(size) < np.exp(log_expit(params.tau))
    if n < 2:
        return out
    first = _categorical(s, size, rng)
    masked = np.broadcast_to(s, (size, n)).copy()
    masked[np.arange(size), first] = -np.inf
    second = np.argmax(masked + rng.gumbel(size=(size, n)), axis=1)
    rows = np.flatnonzero(move)
    out[rows, first[rows]] = second[rows]
    out[rows, second[rows]] = first[rows]
    return out


def sample(params, rng):
    return Permutation(sample_batch(params, 1, rng)[0])


# -- top-k --------------------------------------------------------------------

def _ranked(perms, logps, k):
    order = np.lexsort(tuple(perms[:, c] for c in range(perms.shape[1] - 1, -1, -1)) + (-logps,))
    order = [o for o in order if np.isfinite(logps[o])][:k]
    return [(Permutation(perms[o]), float(logps[o])) for o in order]


def _gpl_beam(S, k, width):
    n = S.shape[0]
    prefixes = np.zeros((1, 0), dtype=np.int64)
    used = np.zeros((1, n), dtype=bool)
    scores = np.zeros(1)
    for row in range(n):
        logits = np.where(used, -np.inf, S[row][None, :])
        step = logits - logsumexp(logits, axis=1, keepdims=True)
        parent, choice = np.nonzero(~used)
        cand = scores[parent] + step[parent, choice]
        cand_prefix = np.concatenate([prefixes[parent], choice[:, None]], axis=1)
        keys = tuple(cand_prefix[:, c] for c in range(row, -1, -1)) + (-cand,)
        keep = np.lexsort(keys)[:width]
        prefixes, scores = cand_prefix[keep], cand[keep]
        used = used[parent[keep]].copy()
        used[np.arange(keep.size), choice[keep]] = True
    # rescore the finished beam so values agree bit-for-bit with log_prob
    return _ranked(prefixes, _gpl_log_prob(S, prefixes), k)


def _irs_top_k(params, k):
    n, s = params.n, params.scores
    left, right = log_expit(s), log_expit(-s)
    # separable bit scores: a beam over bits is exact for the top assignments
    need = k + n + 1
    beam = [(0.0, ())]
    for i in range(n):
        nxt = [(v + left[i], bits + (True,)) for v, bits in beam]
        nxt += [(v + right[i], bits + (False,)) for v, bits in beam]
        beam = heapq.nlargest(need, nxt, key=lambda e: e[0])
    rows = {tuple(range(n))}
    for _, bits in beam:
        b = np.array(bits)
        rows.add(tuple(np.concatenate([np.flatnonzero(b), np.flatnonzero(~b)])))
    perms = np.array(sorted(rows), dtype=np.int64)
    return _ranked(perms, _irs_log_prob(s, perms), k)


def top_k(params, k, inner_beam=None):
    """The ``k`` most probable permutations, most probable first.

    IT and II enumerate their supports.  IRS enumerates for small ``n`` and
    otherwise runs an exact beam over pile assignments.  PL and GPL run a
    beam of width ``inner_beam`` over the rows of the score matrix, which is
    exact once ``inner_beam >= n!``.  Ties are broken by one-line order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    inner_beam = k if inner_beam is None else inner_beam
    if inner_beam < k:
        raise ValueError("inner_beam must be >= k")
    kind, n = params.kind, params.n
    if kind is ReverseKind.GPL:
        return _gpl_beam(params.scores, k, inner_beam)
    if kind is ReverseKind.PL:
        return _gpl_beam(np.broadcast_to(params.scores, (n, n)), k, inner_beam)
    if kind is ReverseKind.IRS and n > IRS_ENUMERATE_MAX_N:
        return _irs_top_k(params, k)
    perms = support(kind, n)
    return _ranked(perms, log_prob_batch(params, perms), k)


def delta_gpl(sigma, M):
    """GPL scores concentrating on ``sigma``: 0 on ``(i, sigma(i))``, ``-M`` elsewhere."""
    if M < 0:
        raise ValueError("M must be >= 0")
    n = sigma.n
    S = np.full((n, n), -float(M))
    S[np.arange(n), sigma.mapping] = 0.0
    return ReverseParams(ReverseKind.GPL, S)
