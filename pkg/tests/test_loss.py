import math

import numpy as np
import pytest

from symdiff.mixing import DenoisingSchedule
from symdiff.model import autodiff as ad
from symdiff.model.autodiff import Tensor
from symdiff.model.loss import (interval_batch, log_prob_tensor, loss_full_trajectory,
                                loss_random_timestep, negative_elbo, trajectory_constants)
from symdiff.model.net import NetConfig, ScoreNet
from symdiff.model.optim import AdamW, AdamWConfig
from symdiff.perm import Permutation, apply, compose_arrays, inverse_arrays, sn_array
from symdiff.reverse import ReverseKind, ReverseParams, delta_gpl, inverse_insertion, log_prob_batch
from symdiff.shuffles import ShuffleKind, pmf_one_step, pmf_rs_tstep, sample_orders


def sorted_lists(M, n, rng):
    return np.sort(rng.random((M, n)), axis=1)[:, :, None]


def small_net(head, n, seed=0):
    cfg = NetConfig(head=head, n=n, d_model=8, n_layers=1, n_heads=2, d_ff=16)
    return ScoreNet(cfg, np.random.default_rng(seed))


class FixedScorer:
    """Returns preset raw outputs in the order ``interval_batch`` produces inputs."""

    def __init__(self, head, raw):
        self.head = ReverseKind(head)
        self.raw = raw

    def forward(self, X, t):
        assert len(X) == len(self.raw)
        return Tensor(self.raw, requires_grad=True)


def test_interval_targets_map_back():
    rng = np.random.default_rng(0)
    x0 = sorted_lists(3, 5, rng)
    orders = sample_orders("RS", 5, 6, 3, rng)
    sched = DenoisingSchedule((0, 2, 6))
    X, t, targets = interval_batch(x0, orders, sched)
    assert t.tolist() == [2, 2, 2, 6, 6, 6]
    for row in range(6):
        m, (a, _) = row % 3, sched.intervals()[row // 3]
        X_a = np.take_along_axis(x0[m], orders[m, a][:, None], axis=0)
        assert np.array_equal(apply(Permutation(targets[row]), X[row]), X_a)


@pytest.mark.parametrize("head", [k.value for k in ReverseKind])
def test_log_prob_tensor_matches_reverse(head):
    rng = np.random.default_rng(1)
    n, B = 4, 6
    raw = rng.normal(size=(B, n, n) if head == "GPL" else (B, n + 1) if head == "IT" else (B, n))
    if head == "IT":
        perms = np.array([p for p in sn_array(n) if np.sum(p != np.arange(n)) in (0, 2)][:B])
    elif head == "II":
        perms = np.array([inverse_insertion(n, i % n) for i in range(B)])
    elif head == "IRS":
        perms = np.array([p for p in sn_array(n) if np.sum(np.diff(p) < 0) <= 1][:B])
    else:
        perms = sn_array(n)[rng.choice(24, B, replace=False)]
    got = log_prob_tensor(head, Tensor(raw), perms).data
    want = [log_prob_batch(ReverseParams.from_raw(head, raw[b]), perms[b:b + 1])[0] for b in range(B)]
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("head, bad", [("II", [3, 2, 1, 0]), ("IRS", [3, 2, 1, 0]),
                                       ("IT", [1, 2, 0, 3])])
def test_log_prob_tensor_rejects_off_support(head, bad):
    raw = Tensor(np.zeros((1, 5 if head == "IT" else 4)))
    with pytest.raises(ValueError):
        log_prob_tensor(head, raw, np.array([bad]))


def test_uniform_gpl_costs_log_factorial_per_step():
    n, rng = 5, np.random.default_rng(2)
    net = small_net("GPL", n)
    for p in net.params.values():
        p.data[...] = 0.0
    sched = DenoisingSchedule((0, 2, 5, 9))
    x0 = sorted_lists(4, n, rng)
    orders = sample_orders("RS", n, 9, 4, rng)
    loss = float(loss_full_trajectory(net, x0, orders, sched).data)
    assert loss == pytest.approx(sched.k * math.lgamma(n + 1), abs=1e-10)


def test_delta_gpl_at_truth_is_nearly_free():
    n, rng = 5, np.random.default_rng(3)
    sched = DenoisingSchedule((0, 3, 7))
    x0 = sorted_lists(4, n, rng)
    orders = sample_orders("RS", n, 7, 4, rng)
    _, _, targets = interval_batch(x0, orders, sched)
    raw = np.stack([delta_gpl(Permutation(r), 30.0).scores for r in targets])
    loss = float(loss_full_trajectory(FixedScorer("GPL", raw), x0, orders, sched).data)
    assert 0.0 <= loss / sched.k < 1e-9


def test_training_smoke_decreases():
    n, rng = 3, np.random.default_rng(4)
    net = small_net("GPL", n, seed=4)
    sched = DenoisingSchedule((0, 1, 3))
    x0 = sorted_lists(16, n, rng)
    orders = sample_orders("RS", n, 3, 16, rng)
    opt = AdamW(net.params, AdamWConfig(lr=3e-3))
    trace = []
    for _ in range(200):
        net.zero_grad()
        loss = loss_full_trajectory(net, x0, orders, sched)
        loss.backward()
        opt.step()
        trace.append(float(loss.data))
    blocks = np.array(trace).reshape(10, 20).mean(axis=1)
    assert np.all(np.diff(blocks) < 0)
    assert min(trace) >= 0.0


def test_random_timestep_single_interval_equals_full():
    n, rng = 4, np.random.default_rng(5)
    net = small_net("PL", n)
    sched = DenoisingSchedule((0, 6))
    x0 = sorted_lists(5, n, rng)
    orders = sample_orders("RS", n, 6, 5, rng)
    full = float(loss_full_trajectory(net, x0, orders, sched).data)
    state = rng.bit_generator.state
    one = float(loss_random_timestep(net, x0, orders, sched, rng).data)
    assert one == full
    assert rng.bit_generator.state == state


def test_random_timestep_unbiased():
    n, rng = 4, np.random.default_rng(6)
    net = small_net("GPL", n)
    sched = DenoisingSchedule((0, 1, 3, 6))
    M = 8
    x0 = sorted_lists(M, n, rng)
    orders = sample_orders("RS", n, 6, M, rng)
    full = float(loss_full_trajectory(net, x0, orders, sched).data)
    # 10^4 single-interval draws: 1250 copies of each of the 8 trajectories
    reps = 10_000 // M
    big_x0, big_orders = np.tile(x0, (reps, 1, 1)), np.tile(orders, (reps, 1, 1))
    with ad.no_grad():
        est = float(loss_random_timestep(net, big_x0, big_orders, sched, rng).data)
    assert abs(est - full) / full < 0.05

    # spread over fresh trajectories at equal budget, reported only
    full_draws, rand_draws = [], []
    with ad.no_grad():
        for _ in range(200):
            o = sample_orders("RS", n, 6, M, rng)
            full_draws.append(float(loss_full_trajectory(net, x0, o, sched).data))
            rand_draws.append(float(loss_random_timestep(net, x0, o, sched, rng).data))
    print(f"std full-trajectory {np.std(full_draws):.4f}, random-timestep {np.std(rand_draws):.4f}")


def test_schedule_mismatch_rejected():
    rng = np.random.default_rng(7)
    net = small_net("PL", 4)
    orders = sample_orders("RS", 4, 5, 2, rng)
    with pytest.raises(ValueError):
        loss_full_trajectory(net, sorted_lists(2, 4, rng), orders, DenoisingSchedule((0, 2, 6)))
    with pytest.raises(ValueError):
        loss_random_timestep(net, sorted_lists(2, 4, rng), orders[0], DenoisingSchedule((0, 5)), rng)
    with pytest.raises(ValueError):
        loss_full_trajectory(net, sorted_lists(2, 4, rng), orders[:, :1], DenoisingSchedule((0,)))


def test_constants_rs():
    n, rng = 4, np.random.default_rng(8)
    sched = DenoisingSchedule((0, 2, 5))
    orders = sample_orders("RS", n, 5, 3, rng)
    c = trajectory_constants("RS", orders, sched)
    want = 0.0
    for m in range(3):
        for a, b in sched.intervals():
            step = compose_arrays(inverse_arrays(orders[m, a][None]), orders[m, b][None])[0]
            want += math.log(pmf_rs_tstep(Permutation(step), b - a))
    assert c["log_n_factorial"] == pytest.approx(math.log(24))
    assert c["forward_log_q"] == pytest.approx(want / 3, abs=1e-12)
    assert negative_elbo(1.5, c) == pytest.approx(1.5 + math.log(24) + want / 3)


def test_constants_rt_unmerged_and_merged():
    n, rng = 4, np.random.default_rng(9)
    orders = sample_orders("RT", n, 3, 2, rng)
    c = trajectory_constants("RT", orders, DenoisingSchedule.full(3))
    want = 0.0
    for m in range(2):
        for a in range(3):
            step = compose_arrays(inverse_arrays(orders[m, a][None]), orders[m, a + 1][None])[0]
            want += math.log(pmf_one_step(ShuffleKind.RT, Permutation(step)))
    assert c["forward_log_q"] == pytest.approx(want / 2, abs=1e-12)
    assert math.isnan(trajectory_constants("RT", orders, DenoisingSchedule((0, 3)))["forward_log_q"])
