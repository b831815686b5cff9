"""Training, reverse sampling, decoding and evaluation for the sorting task.

A sample is ``n`` scalars drawn from uniform(0, 1).  ``X_0`` lists them in
ascending order (optionally with Gaussian feature noise), the forward chain
shuffles ``X_0`` and the model learns to undo it.  At test time the model
sees a uniformly shuffled list ``X_T`` and decodes a permutation ``pi`` with
``X_0 = apply(pi, X_T)``.

Anything with a ``head`` attribute and a ``scores(X, t)`` method returning
raw head outputs for a batch can be decoded or sampled; ``ScoreNet`` is one,
``DeltaSortScorer`` is an oracle used for plumbing checks.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .mixing import DenoisingSchedule
from .model.loss import loss_full_trajectory, loss_random_timestep
from .model.optim import AdamW, AdamWConfig
from .perm import Permutation, compose_arrays, inverse
from .reverse import ReverseKind, ReverseParams, delta_gpl, sample_batch, top_k
from .shuffles import ShuffleKind, sample_orders

log = logging.getLogger(__name__)

LOSS_MODES = ("full-trajectory", "random-timestep")

# inverse-shuffle heads only cover single steps of their own forward shuffle
MATCHING_FORWARD = {
    ReverseKind.IT: ShuffleKind.RT,
    ReverseKind.II: ShuffleKind.RI,
    ReverseKind.IRS: ShuffleKind.RS,
}


def make_sort_dataset(n, size, rng, noise_std=0.0):
    """``(size, n, 1)`` clean lists, rows in ascending order of the true values."""
    values = np.sort(rng.random((size, n)), axis=1)
    if noise_std > 0:
        values = values + rng.normal(0.0, noise_std, values.shape)
    return values[:, :, None]


@dataclass(frozen=True)
class TrainConfig:
    schedule: DenoisingSchedule
    forward: str = "RS"
    batch_size: int = 64
    epochs: int = 10
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    trajectories_per_sample: int = 3
    loss_mode: str = "full-trajectory"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "forward", ShuffleKind(str(self.forward).upper()).value)
        if not isinstance(self.schedule, DenoisingSchedule):
            object.__setattr__(self, "schedule", DenoisingSchedule(tuple(self.schedule)))
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        for name in ("batch_size", "epochs", "trajectories_per_sample"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ValueError("lr and eps must be > 0, weight_decay >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.schedule.k < 1:
            raise ValueError("training needs at least one denoising step")

    @property
    def optimizer(self):
        return AdamWConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def to_dict(self):
        d = asdict(self)
        d["schedule"] = self.schedule.to_list()
        return d


def check_head_schedule(head, forward, schedule):
    """Reject head/forward/schedule combinations outside the head's support."""
    head = ReverseKind(head)
    forward = ShuffleKind(forward)
    if head not in MATCHING_FORWARD:
        return
    if MATCHING_FORWARD[head] is not forward:
        raise ValueError(f"{head.value} head needs a {MATCHING_FORWARD[head].value} forward process, got {forward.value}")
    if not schedule.is_unmerged():
        raise ValueError(f"{head.value} head cannot learn merged steps; schedule {schedule.to_list()} skips timesteps")


@dataclass
class TrainResult:
    net: object
    history: list
    optimizer: AdamW
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def train(dataset, net, config, rng, optimizer=None, on_step=None):
    """Optimise ``net`` on ``dataset`` (``(N, n, d)`` clean lists).

    The loss history has one entry per optimiser step (epochs x batches).
    """
    check_head_schedule(net.head, config.forward, config.schedule)
    dataset = np.asarray(dataset, dtype=np.float64)
    N, n, _ = dataset.shape
    optimizer = optimizer or AdamW(net.params, config.optimizer)
    m = config.trajectories_per_sample
    sched = config.schedule
    history = []
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(N)
        for lo in range(0, N, config.batch_size):
            batch = dataset[order[lo:lo + config.batch_size]]
            x0 = np.repeat(batch, m, axis=0)
            orders = sample_orders(config.forward, n, sched.T, x0.shape[0], rng)
            if config.loss_mode == "full-trajectory":
                loss = loss_full_trajectory(net, x0, orders, sched)
            else:
                loss = loss_random_timestep(net, x0, orders, sched, rng)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            history.append(float(loss.data))
            if on_step is not None:
                on_step(len(history), history[-1])
        log.info("epoch %d loss %.5f", epoch + 1, history[-1])
    return TrainResult(net, history, optimizer, time.perf_counter() - start)


# -- reverse process ----------------------------------------------------------

def _as_batch(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def sample_rows(kind, raw, rng):
    """One draw per row of a batch of raw head outputs, ``(B, n)``."""
    kind = ReverseKind(kind)
    raw = np.asarray(raw, dtype=np.float64)
    if kind in (ReverseKind.PL, ReverseKind.GPL):
        S = raw if kind is ReverseKind.GPL else np.broadcast_to(raw[:, None, :], raw.shape + raw.shape[-1:])
        return kernels.gumbel_plackett_luce(S, rng.gumbel(size=S.shape))
    return np.concatenate([sample_batch(ReverseParams.from_raw(kind, r), 1, rng) for r in raw])


def reverse_sample_batch(scorer, X, schedule, rng, size=1):
    """``size`` reverse runs from ``X``; returns ``(size, n)`` with ``X_0 = X[pi]``.

    Each run starts from a uniformly drawn ``X_T``.
    """
    X = _as_batch(X)
    n = X.shape[0]
    orders = np.argsort(rng.random((size, n)), axis=1)
    for a, b in reversed(schedule.intervals()):
        Xt = X[orders]
        rho = sample_rows(scorer.head, scorer.scores(Xt, np.full(size, b)), rng)
        orders = compose_arrays(orders, rho)
    return orders


def reverse_sample(scorer, X, schedule, rng):
    """Draw ``X_T`` by a uniform shuffle of ``X``, then run the reverse chain to ``X_0``."""
    X = _as_batch(X)
    return X[reverse_sample_batch(scorer, X, schedule, rng)[0]]


# -- decoding -----------------------------------------------------------------

@dataclass(frozen=True)
class DecodeResult:
    perm: Permutation
    log_prob: float


def decode_beam_batch(scorer, Xs, schedule, outer_beam, inner_beam=None):
    """Beam decoding for a batch of shuffled lists ``Xs`` of shape ``(P, n, d)``.

    Every candidate is a position order relative to its input list.  Per
    schedule step (from ``T`` down) each candidate is expanded by its
    ``outer_beam`` most probable reverse steps, candidates landing on the same
    order keep their best accumulated log-probability, and the best
    ``outer_beam`` survive.  Ties go to the lexicographically smaller order.
    """
    if outer_beam < 1:
        raise ValueError("outer_beam must be >= 1")
    inner_beam = outer_beam if inner_beam is None else inner_beam
    if inner_beam < outer_beam:
        raise ValueError("inner_beam must be >= outer_beam")
    Xs = np.asarray(Xs, dtype=np.float64)
    P, n = Xs.shape[:2]
    beams = [[(tuple(range(n)), 0.0)] for _ in range(P)]
    for a, b in reversed(schedule.intervals()):
        owner = np.repeat(np.arange(P), [len(bm) for bm in beams])
        cands = [c for bm in beams for c in bm]
        orders = np.array([c[0] for c in cands], dtype=np.int64)
        Xt = np.take_along_axis(Xs[owner], orders[:, :, None], axis=1)
        raw = scorer.scores(Xt, np.full(len(cands), b))
        merged = [dict() for _ in range(P)]
        for (order, score), p, r in zip(cands, owner, raw):
            params = ReverseParams.from_raw(scorer.head, r)
            for rho, lp in top_k(params, outer_beam, inner_beam):
                child = tuple(np.asarray(order)[rho.mapping].tolist())
                total = score + lp
                if total > merged[p].get(child, -math.inf):
                    merged[p][child] = total
        beams = [sorted(d.items(), key=lambda e: (-e[1], e[0]))[:outer_beam] for d in merged]
    return [DecodeResult(Permutation(bm[0][0]), float(bm[0][1])) for bm in beams]


def decode_beam(scorer, X, schedule, outer_beam, inner_beam=None, restarts=1, rng=None):
    """Best beam result for ``X`` over ``restarts`` starting orders.

    The first restart decodes ``X`` as given; further restarts decode random
    reorderings of it (``rng`` required) and the result is mapped back.
    """
    X = _as_batch(X)
    n = X.shape[0]
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if restarts > 1 and rng is None:
        raise ValueError("restarts > 1 needs an rng")
    starts = [np.arange(n)] + [rng.permutation(n) for _ in range(restarts - 1)]
    results = decode_beam_batch(scorer, np.stack([X[c] for c in starts]), schedule, outer_beam, inner_beam)
    best = None
    for c, res in zip(starts, results):
        perm = Permutation(c[res.perm.mapping])
        if best is None or res.log_prob > best.log_prob:
            best = DecodeResult(perm, res.log_prob)
    return best


def decode_greedy(scorer, X, schedule, inner_beam=1):
    """Follow the (approximate) mode of each reverse step."""
    return decode_beam(scorer, X, schedule, 1, inner_beam)


class DeltaSortScorer:
    """Oracle GPL scorer that always points at the ascending sort of its input."""

    head = ReverseKind.GPL

    def __init__(self, M=30.0):
        self.M = M

    def scores(self, X, t):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([delta_gpl(Permutation(np.argsort(x[:, 0], kind="stable")), self.M).scores for x in X])


class UniformScorer:
    """Scorer with all-zero scores for the given head."""

    def __init__(self, head):
        self.head = ReverseKind(head)

    def scores(self, X, t):
        B, n = np.asarray(X).shape[:2]
        shape = {ReverseKind.GPL: (B, n, n), ReverseKind.IT: (B, n + 1)}.get(self.head, (B, n))
        return np.zeros(shape)


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    kendall_tau: float
    accuracy: float
    correctness: float

    def to_dict(self):
        return asdict(self)


def evaluate(predicted, truth):
    """Kendall tau between the object rankings, exact match, and fraction of positions right."""
    if predicted.n != truth.n:
        raise ValueError(f"size mismatch: {predicted.n} vs {truth.n}")
    p, q = predicted.mapping, truth.mapping
    n = predicted.n
    if n < 2:
        tau = 1.0
    else:
        # tau-a from an exact count of discordant object pairs
        a, b = inverse(predicted).mapping, inverse(truth).mapping
        upper = np.triu(np.ones((n, n), dtype=bool), k=1)
        disc = int(np.sum(upper & (np.sign(a[:, None] - a) != np.sign(b[:, None] - b))))
        pairs = n * (n - 1) // 2
        tau = (pairs - 2 * disc) / pairs
    return Metrics(tau, float(np.array_equal(p, q)), float(np.mean(p == q)))


def aggregate(metrics):
    if not metrics:
        raise ValueError("nothing to aggregate")
    return Metrics(*(math.fsum(getattr(m, f) for m in metrics) / len(metrics)
                     for f in ("kendall_tau", "accuracy", "correctness")))


def evaluate_dataset(scorer, x0, schedule, rng, outer_beam=1, inner_beam=None, chunk=64):
    """Shuffle each clean list uniformly, decode, and score against the truth.

    Returns ``(aggregate Metrics, per-sample rows)``; each row holds the
    truth, prediction (1-based), accumulated log-prob and metrics.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    N, n = x0.shape[:2]
    shuffles = np.argsort(rng.random((N, n)), axis=1)
    Xs = np.take_along_axis(x0, shuffles[:, :, None], axis=1)
    truths = np.argsort(shuffles, axis=1)
    results = []
    for lo in range(0, N, chunk):
        results += decode_beam_batch(scorer, Xs[lo:lo + chunk], schedule, outer_beam, inner_beam)
    rows, metrics = [], []
    for truth, res in zip(truths, results):
        m = evaluate(res.perm, Permutation(truth))
        metrics.append(m)
        rows.append({
            "truth": (truth + 1).tolist(),
            "predicted": res.perm.to_one_based(),
            "log_prob": res.log_prob,
            **m.to_dict(),
        })
    return aggregate(metrics), rows

