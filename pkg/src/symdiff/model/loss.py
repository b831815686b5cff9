"""Training objectives on forward shuffle trajectories.

Both losses take object orders from the forward chain (see
``shuffles.sample_orders``): ``orders[m, t]`` lists which original object
sits at each position of ``X_t``.  For a schedule interval ``(a, b)`` the
network sees ``X_b`` at time ``b`` and is scored on the permutation ``rho``
with ``X_a = apply(rho, X_b)``.
"""
import math

import numpy as np

from .. import kernels
from ..perm import Permutation, compose_arrays, inverse_arrays
from ..reverse import ReverseKind
from ..shuffles import ShuffleKind, pmf_one_step, rs_log_pmf_by_rises
from . import autodiff as ad


def _causal_mask(n):
    """``0`` where ``j >= i`` else ``-inf``, shape ``(n, n)``."""
    return np.where(np.arange(n)[None, :] >= np.arange(n)[:, None], 0.0, -np.inf)


def _gpl_log_prob(S, perms):
    B, n = perms.shape
    G = ad.take_along_axis(S, np.broadcast_to(perms[:, None, :], (B, n, n)), axis=2)
    lse = ad.logsumexp(G + _causal_mask(n), axis=2)
    chosen = ad.reshape(ad.take_along_axis(S, perms[:, :, None], axis=2), (B, n))
    return ad.sum_(chosen - lse, axis=1)


def _pl_log_prob(s, perms):
    B, n = perms.shape
    g = ad.take_along_axis(s, perms, axis=1)
    lse = ad.logsumexp(ad.reshape(g, (B, 1, n)) + _causal_mask(n), axis=2)
    return ad.sum_(g - lse, axis=1)


def _ii_log_prob(s, perms):
    B, n = perms.shape
    last = perms[:, -1]
    cols = np.arange(n)[None, :]
    expected = np.where(cols < last[:, None], cols, cols + 1)
    expected[:, -1] = last
    if not np.array_equal(expected, perms):
        raise ValueError("target outside the inverse-insertion support")
    return ad.reshape(ad.take_along_axis(ad.log_softmax(s, axis=1), last[:, None], axis=1), (B,))


def _irs_log_prob(s, perms):
    B, n = perms.shape
    descents = (np.diff(perms, axis=1) < 0).sum(axis=1)
    if np.any(descents > 1):
        raise ValueError("target outside the inverse-riffle support")
    left, right = ad.log_sigmoid(s), ad.log_sigmoid(-1.0 * s)
    # identity: sum over the n+1 cut points of prefix-left, suffix-right
    pos, cut = np.arange(n)[:, None], np.arange(n + 1)[None, :]
    prefix = (pos < cut).astype(np.float64)
    cuts = left @ prefix + right @ (1.0 - prefix)
    ident = ad.logsumexp(cuts, axis=1)
    split = np.argmax(np.diff(perms, axis=1) < 0, axis=1) + 1 if n > 1 else np.zeros(B, dtype=np.int64)
    in_left = np.arange(n)[None, :] < split[:, None]
    bits = np.zeros((B, n))
    np.put_along_axis(bits, perms, in_left.astype(np.float64), axis=1)
    piles = ad.sum_(left * bits + right * (1.0 - bits), axis=1)
    is_id = (descents == 0).astype(np.float64)
    return ident * is_id + piles * (1.0 - is_id)


def _it_log_prob(raw, perms):
    B, n = perms.shape
    s = ad.gather(raw, (slice(None), slice(0, n)))
    tau = ad.gather(raw, (slice(None), n))
    moved = perms != np.arange(n)
    is_id = ~moved.any(axis=1)
    stay = ad.log_sigmoid(-1.0 * tau)
    if n < 2:
        if not is_id.all():
            raise ValueError("target outside the inverse-transposition support")
        return stay
    pos = np.argsort(~moved, axis=1, kind="stable")[:, :2]
    i, j = pos[:, 0].copy(), pos[:, 1].copy()
    swap = ~is_id
    ok = (moved.sum(axis=1) == 2) & (perms[np.arange(B), i] == j)
    if np.any(swap & ~ok):
        raise ValueError("target outside the inverse-transposition support")
    i[is_id], j[is_id] = 0, 1
    lse = ad.logsumexp(s, axis=1)
    pair = ad.take_along_axis(s, np.stack([i, j], axis=1), axis=1)
    both = ad.sum_(pair, axis=1) - lse
    drop = np.zeros((B, 2, n))
    drop[np.arange(B), 0, i] = -np.inf
    drop[np.arange(B), 1, j] = -np.inf
    rest = ad.logsumexp(ad.reshape(s, (B, 1, n)) + drop, axis=2)
    move = ad.log_sigmoid(tau) + ad.logsumexp(ad.reshape(both, (B, 1)) - rest, axis=1)
    w = is_id.astype(np.float64)
    return stay * w + move * (1.0 - w)


def log_prob_tensor(kind, raw, perms):
    """Differentiable log p(perms[b] | raw[b]) for a batch of head outputs."""
    perms = np.asarray(perms, dtype=np.int64)
    kind = ReverseKind(kind)
    if kind is ReverseKind.GPL:
        return _gpl_log_prob(raw, perms)
    if kind is ReverseKind.PL:
        return _pl_log_prob(raw, perms)
    if kind is ReverseKind.II:
        return _ii_log_prob(raw, perms)
    if kind is ReverseKind.IRS:
        return _irs_log_prob(raw, perms)
    return _it_log_prob(raw, perms)


def _check(orders, schedule):
    if orders.ndim != 3:
        raise ValueError("orders must be (M, T+1, n)")
    if orders.shape[1] != schedule.T + 1:
        raise ValueError(f"trajectory length T={orders.shape[1] - 1} != schedule T={schedule.T}")
    if schedule.k < 1:
        raise ValueError("schedule has no denoising steps")


def interval_batch(x0, orders, schedule, which=None):
    """Network inputs, times and targets for selected schedule intervals.

    ``which`` gives one interval index (1-based) per trajectory; by default
    every interval of every trajectory is returned, interval-major.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    M = orders.shape[0]
    ts = np.asarray(schedule.timesteps)
    if which is None:
        idx = np.repeat(np.arange(1, schedule.k + 1), M)
        rows = np.tile(np.arange(M), schedule.k)
    else:
        idx, rows = np.asarray(which), np.arange(M)
    after = orders[rows, ts[idx]]
    before = orders[rows, ts[idx - 1]]
    X = np.take_along_axis(x0[rows], after[:, :, None], axis=1)
    targets = compose_arrays(inverse_arrays(after), before)
    return X, ts[idx], targets


def _nll(net, X, t, targets, scale):
    raw = net.forward(X, t)
    return ad.mul(ad.sum_(log_prob_tensor(net.head, raw, targets)), -scale)


def loss_full_trajectory(net, x0, orders, schedule):
    """Mean over trajectories of ``-sum_i log p(X_{t_{i-1}} | X_{t_i})``.

    ``x0`` is ``(M, n, d)`` (one clean list per trajectory) and ``orders`` is
    ``(M, T+1, n)``.  The additive constants are reported by
    ``trajectory_constants``.
    """
    orders = np.asarray(orders)
    _check(orders, schedule)
    X, t, targets = interval_batch(x0, orders, schedule)
    return _nll(net, X, t, targets, 1.0 / orders.shape[0])


def loss_random_timestep(net, x0, orders, schedule, rng):
    """Unbiased estimate: one uniformly drawn interval per trajectory, scaled by ``k``.

    With a single interval nothing is drawn from ``rng`` and the value equals
    ``loss_full_trajectory``.
    """
    orders = np.asarray(orders)
    _check(orders, schedule)
    M, k = orders.shape[0], schedule.k
    which = np.ones(M, dtype=np.int64) if k == 1 else rng.integers(1, k + 1, size=M)
    X, t, targets = interval_batch(x0, orders, schedule, which)
    return _nll(net, X, t, targets, k / M)


def trajectory_constants(kind, orders, schedule):
    """Terms of the negative ELBO that do not depend on the network.

    Returns ``log n!`` (the uniform prior on ``X_T``) and the mean over
    trajectories of ``sum_i log q(X_{t_i} | X_{t_{i-1}})``.  The latter is
    ``nan`` for merged RT/RI steps, which have no closed form here.
    """
    kind = ShuffleKind(kind)
    orders = np.asarray(orders)
    _check(orders, schedule)
    M, _, n = orders.shape
    total = np.zeros(M)
    for a, b in schedule.intervals():
        step = compose_arrays(inverse_arrays(orders[:, a]), orders[:, b])
        if kind is ShuffleKind.RS:
            total += rs_log_pmf_by_rises(n, b - a)[kernels.rising_sequences(step) - 1]
        elif b - a == 1:
            total += np.log([pmf_one_step(kind, Permutation(row)) for row in step])
        else:
            total[:] = np.nan
    return {"log_n_factorial": math.lgamma(n + 1), "forward_log_q": float(total.mean())}


def negative_elbo(loss_value, constants):
    """Combine the learned term with the constants into the full bound."""
    return loss_value + constants["log_n_factorial"] + constants["forward_log_q"]

