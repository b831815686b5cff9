"""Riffle-shuffle mixing analytics and denoising-schedule planning.

Total-variation distances between t-step riffle distributions are computed
by grouping permutations by their number of rising sequences, weighted by
Eulerian numbers.  All float work happens in log space so that ``n = 100``
and ``t = 15`` (probabilities around ``2**-1500``) stay in range.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .shuffles import ShuffleKind, rs_log_pmf_by_rises

MAX_EXACT_N = 64


@dataclass(frozen=True)
class EulerianTable:
    """Row ``n`` of the Eulerian triangle: ``A[n, r]`` for ``r = 1..n``."""

    n: int
    log_counts: np.ndarray
    exact: tuple = None

    @property
    def counts(self):
        if self.exact is None:
            raise ValueError(f"exact counts only kept for n <= {MAX_EXACT_N}")
        return self.exact


def _log_row(n):
    row = np.zeros(1)
    for m in range(2, n + 1):
        r = np.arange(1, m + 1)
        stay = np.full(m, -np.inf)
        stay[:-1] = np.log(r[:-1]) + row
        grow = np.full(m, -np.inf)
        grow[1:] = np.log(m - r[1:] + 1) + row
        row = np.logaddexp(stay, grow)
    return row


def _exact_row(n):
    row = [1]
    for m in range(2, n + 1):
        row = [
            (r * row[r - 1] if r <= m - 1 else 0) + ((m - r + 1) * row[r - 2] if r >= 2 else 0)
            for r in range(1, m + 1)
        ]
    return tuple(row)


def eulerian(n, exact=None):
    """Eulerian numbers via ``A[n,r] = r A[n-1,r] + (n-r+1) A[n-1,r-1]``.

    Big-integer counts are attached for ``n <= 64``; asking for them
    explicitly (``exact=True``) above that raises.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if exact and n > MAX_EXACT_N:
        raise ValueError(f"exact Eulerian numbers refused for n > {MAX_EXACT_N}")
    keep = n <= MAX_EXACT_N if exact is None else exact
    log_counts = _log_row(n)
    log_counts.setflags(write=False)
    return EulerianTable(n, log_counts, _exact_row(n) if keep else None)


def _log_abs_diff(a, b):
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    out = np.full(np.shape(a), -np.inf)
    live = hi > -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(live, lo - hi, 0.0)
        out = np.where(live, hi + np.log(-np.expm1(gap)), -np.inf)
    return out


def _tv_from_logs(table, log_p, log_q):
    # TV = 1 - sum A min(p, q).  Near TV = 1 the overlap is tiny and keeps
    # full relative precision; below 1/2 the half-L1 sum is the accurate one.
    overlap = math.fsum(np.exp(table.log_counts + np.minimum(log_p, log_q)).tolist())
    if overlap <= 0.5:
        return max(0.0, 1.0 - overlap)
    terms = np.exp(table.log_counts + _log_abs_diff(log_p, log_q))
    return min(1.0, 0.5 * math.fsum(terms.tolist()))


def tv_rs_between(n, t, t_prime, table=None):
    """TV distance between the t-step and t'-step riffle distributions."""
    if t < 0 or t_prime < 0:
        raise ValueError("t, t' must be >= 0")
    if t == t_prime:
        return 0.0
    table = table or eulerian(n, exact=False)
    return _tv_from_logs(table, rs_log_pmf_by_rises(n, t), rs_log_pmf_by_rises(n, t_prime))


def tv_rs_to_uniform(n, t, table=None):
    if t < 0:
        raise ValueError("t must be >= 0")
    table = table or eulerian(n, exact=False)
    log_u = np.full(n, -math.lgamma(n + 1))
    return _tv_from_logs(table, rs_log_pmf_by_rises(n, t), log_u)


def _exact_pmf_by_rises(n, t):
    return [Fraction(math.comb(n + 2 ** t - r, n), 2 ** (t * n)) for r in range(1, n + 1)]


def tv_rs_between_exact(n, t, t_prime):
    counts = eulerian(n, exact=True).counts
    p, q = _exact_pmf_by_rises(n, t), _exact_pmf_by_rises(n, t_prime)
    return sum((a * abs(x - y) for a, x, y in zip(counts, p, q)), Fraction(0)) / 2


def tv_rs_to_uniform_exact(n, t):
    counts = eulerian(n, exact=True).counts
    u = Fraction(1, math.factorial(n))
    return sum((a * abs(x - u) for a, x in zip(counts, _exact_pmf_by_rises(n, t))), Fraction(0)) / 2


def cutoff_time(kind, n):
    """Cut-off time: n/2 ln n (RT), n ln n (RI), 3/2 log2 n (RS)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    kind = kind if isinstance(kind, ShuffleKind) else ShuffleKind(str(kind).upper())
    if kind is ShuffleKind.RT:
        return 0.5 * n * math.log(n)
    if kind is ShuffleKind.RI:
        return n * math.log(n)
    return 1.5 * math.log2(n)


@dataclass(frozen=True)
class DenoisingSchedule:
    """Strictly increasing timesteps ``0 = t_0 < ... < t_k = T``.

    ``(0,)`` is accepted as the degenerate ``T = 0`` schedule with no steps.
    """

    timesteps: tuple

    def __post_init__(self):
        ts = tuple(int(t) for t in self.timesteps)
        object.__setattr__(self, "timesteps", ts)
        if not ts or ts[0] != 0:
            raise ValueError(f"schedule must start at 0: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"schedule must be strictly increasing: {ts}")

    @property
    def T(self):
        return self.timesteps[-1]

    @property
    def k(self):
        return len(self.timesteps) - 1

    def intervals(self):
        """``(t_{i-1}, t_i)`` for ``i = 1..k``."""
        return list(zip(self.timesteps, self.timesteps[1:]))

    def is_unmerged(self):
        return self.timesteps == tuple(range(self.T + 1))

    @classmethod
    def full(cls, T):
        return cls(tuple(range(T + 1)))

    def to_list(self):
        return list(self.timesteps)


def first_time_below(n, eps, table=None, t_max=4096):
    table = table or eulerian(n, exact=False)
    for t in range(t_max + 1):
        if tv_rs_to_uniform(n, t, table) <= eps:
            return t
    raise ValueError(f"TV to uniform never reaches {eps} within {t_max} steps")


def plan_schedule(n, eps_T=0.005, gap=0.3, band=(0.1, 0.5)):
    """Choose the diffusion length ``T`` and a denoising schedule.

    ``T`` is the first ``t`` with ``TV(q^(t), u) <= eps_T`` (at least 1).  The
    first nonzero timestep is the earliest ``t`` whose distribution is within
    ``band[1]`` of ``q^(T)``; everything before it is merged into a single
    step to 0.  From there each next timestep is the first one at least
    ``gap`` away in TV, and once ``T`` itself is closer than ``gap`` the
    schedule jumps to ``T``.  A trailing interval below ``band[0]`` is merged
    into its predecessor when that keeps the merged step within ``band[1]``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if not (0 < eps_T < 1 and 0 < gap < 1):
        raise ValueError("eps_T and gap must lie in (0, 1)")
    lo, hi = band
    table = eulerian(n, exact=False)
    T = max(1, first_time_below(n, eps_T, table))

    def tv(a, b):
        return tv_rs_between(n, a, b, table)

    first = next(t for t in range(1, T + 1) if t == T or tv(t, T) <= hi)
    steps = [0, first]
    while steps[-1] < T:
        cur = steps[-1]
        if tv(cur, T) < gap:
            steps.append(T)
            break
        steps.append(next((t for t in range(cur + 1, T + 1) if tv(cur, t) >= gap), T))
    if len(steps) >= 4 and tv(steps[-2], T) < lo and tv(steps[-3], T) <= hi:
        del steps[-2]
    return T, DenoisingSchedule(tuple(steps))
