"""Forward card-shuffling processes on S_n.

Three shuffles are supported: random transpositions (RT), random insertions
(RI) and the Gilbert-Shannon-Reeds riffle shuffle (RS).  Each has a sampler
and an exact one-step pmf; the riffle shuffle also has a closed-form t-step
pmf depending only on the number of rising sequences.
"""
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import kernels
from .perm import Permutation, compose_arrays, rising_sequences


class ShuffleKind(str, Enum):
    RT = "RT"
    RI = "RI"
    RS = "RS"


def _kind(kind):
    return kind if isinstance(kind, ShuffleKind) else ShuffleKind(str(kind).upper())


def insertion(n, i):
    """``insert_i``: the last card goes right before card ``i`` (0-based)."""
    return np.concatenate([np.arange(i), [n - 1], np.arange(i, n - 1)]).astype(np.int64)


def transposition(n, i, j):
    m = np.arange(n, dtype=np.int64)
    m[i], m[j] = m[j], m[i]
    return m


# -- samplers --------------------------------------------------------------

def riffle_gsr(n, size, rng):
    """Binomial cut and proportional-drop interleave, ``(size, n)``."""
    cuts = rng.binomial(n, 0.5, size=size)
    drops = rng.random((size, n))
    return kernels.riffle_interleave(cuts, drops)


def riffle_geometric(n, size, rng):
    """Sort the doubled fractional parts of ``n`` uniform points, ``(size, n)``."""
    return kernels.riffle_geometric(rng.random((size, n)))


def sample_steps(kind, n, size, rng):
    """``size`` i.i.d. one-step shuffles as an ``(size, n)`` int array."""
    kind = _kind(kind)
    if n < 1:
        raise ValueError("n must be >= 1")
    if kind is ShuffleKind.RS:
        return riffle_geometric(n, size, rng)
    out = np.tile(np.arange(n, dtype=np.int64), (size, 1))
    rows = np.arange(size)
    if kind is ShuffleKind.RT:
        i = rng.integers(n, size=size)
        j = rng.integers(n, size=size)
        out[rows, i] = j
        out[rows, j] = i
        return out
    # RI: positions >= i shift right by one, the last card lands at i
    i = rng.integers(n, size=size)
    cols = np.arange(n)
    shifted = cols[None, :] > i[:, None]
    out = np.where(shifted, cols[None, :] - 1, cols[None, :])
    out[rows, i] = n - 1
    return out.astype(np.int64)


def sample_step(kind, n, rng):
    return Permutation(sample_steps(kind, n, 1, rng)[0])


def sample_rs_geometric(n, rng):
    return Permutation(riffle_geometric(n, 1, rng)[0])


def sample_rs_gsr(n, rng):
    return Permutation(riffle_gsr(n, 1, rng)[0])


# -- exact pmfs ------------------------------------------------------------

def pmf_one_step(kind, sigma):
    kind = _kind(kind)
    n = sigma.n
    m = sigma.mapping
    if kind is ShuffleKind.RS:
        r = rising_sequences(sigma)
        return math.comb(n + 2 - r, n) / 2.0 ** n
    if kind is ShuffleKind.RT:
        if sigma.is_identity():
            return 1.0 / n
        moved = np.flatnonzero(m != np.arange(n))
        if moved.size == 2 and m[moved[0]] == moved[1]:
            return 2.0 / n ** 2
        return 0.0
    for i in range(n):
        if np.array_equal(m, insertion(n, i)):
            return 1.0 / n
    return 0.0


def rs_log_pmf_by_rises(n, t):
    """log q_RS^(t) for a permutation with r = 1..n rising sequences.

    Uses ``C(n+2^t-r, n) / 2^(tn) = prod_j (1 + (n-r-j)/2^t) / n!`` so that
    nothing overflows for large ``t * n``.  Zero mass maps to ``-inf``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    r = np.arange(1, n + 1)
    c = (n - r)[:, None] - np.arange(n)[None, :]
    scale = math.ldexp(1.0, -t)
    out = np.full(n, -np.inf)
    alive = r <= 2.0 ** t if t < 1024 else np.ones(n, dtype=bool)
    with np.errstate(divide="ignore"):
        terms = np.log1p(c[alive] * scale)
    out[alive] = terms.sum(axis=1) - math.lgamma(n + 1)
    return out


def pmf_rs_tstep(sigma, t):
    r = rising_sequences(sigma)
    return float(np.exp(rs_log_pmf_by_rises(sigma.n, t)[r - 1]))


def pmf_rs_tstep_exact(sigma, t):
    if t < 0:
        raise ValueError("t must be >= 0")
    n = sigma.n
    r = rising_sequences(sigma)
    return Fraction(math.comb(n + 2 ** t - r, n), 2 ** (t * n))


# -- trajectories ----------------------------------------------------------

def chain_orders(moves):
    """Object order after each move: ``orders[t] = orders[t-1][moves[t-1]]``.

    ``moves`` is ``(..., T, n)``; the result is ``(..., T+1, n)`` and starts
    at the identity.
    """
    moves = np.asarray(moves, dtype=np.int64)
    *lead, T, n = moves.shape
    orders = np.empty((*lead, T + 1, n), dtype=np.int64)
    orders[..., 0, :] = np.arange(n)
    for t in range(T):
        orders[..., t + 1, :] = compose_arrays(orders[..., t, :], moves[..., t, :])
    return orders


def sample_orders(kind, n, T, size, rng):
    """Forward chains for ``size`` decks: ``(size, T+1, n)`` object orders."""
    moves = sample_steps(kind, n, size * T, rng).reshape(size, T, n)
    return chain_orders(moves)


@dataclass(frozen=True)
class Trajectory:
    """One forward run ``X_0 -> X_T`` with ``X_t = apply(moves[t-1], X_{t-1})``."""

    kind: ShuffleKind
    x0: np.ndarray
    moves: np.ndarray

    @property
    def T(self):
        return int(self.moves.shape[0])

    @cached_property
    def orders(self):
        return chain_orders(self.moves)

    @property
    def states(self):
        return [self.x0[o] for o in self.orders]

    @property
    def move_perms(self):
        return [Permutation(m) for m in self.moves]

    def to_json(self, include_states=False):
        doc = {
            "kind": self.kind.value,
            "T": self.T,
            "moves": (self.moves + 1).tolist(),
        }
        if include_states:
            doc["x0"] = self.x0.tolist()
            doc["states"] = [s.tolist() for s in self.states]
        return doc

    @classmethod
    def from_json(cls, doc, x0=None):
        n = len(doc["moves"][0]) if doc["moves"] else None
        if x0 is None:
            if "x0" in doc:
                x0 = np.asarray(doc["x0"], dtype=np.float64)
            else:
                x0 = np.arange(n, dtype=np.float64)[:, None]
        moves = np.asarray(doc["moves"], dtype=np.int64).reshape(int(doc["T"]), -1) - 1
        return cls(_kind(doc["kind"]), np.asarray(x0), moves)


def forward_trajectory(x0, kind, T, rng):
    if T < 0:
        raise ValueError("T must be >= 0")
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        x0 = x0[:, None]
    n = x0.shape[0]
    moves = sample_steps(kind, n, T, rng).reshape(T, n)
    return Trajectory(_kind(kind), x0, moves)
