"""Finite-difference check of end-to-end loss gradients."""
from dataclasses import dataclass

import numpy as np

from ..mixing import DenoisingSchedule
from ..reverse import ReverseKind
from ..shuffles import ShuffleKind, sample_orders
from .loss import loss_full_trajectory
from .net import NetConfig, ScoreNet

FORWARD_FOR_HEAD = {
    ReverseKind.IT: ShuffleKind.RT,
    ReverseKind.II: ShuffleKind.RI,
    ReverseKind.IRS: ShuffleKind.RS,
    ReverseKind.PL: ShuffleKind.RS,
    ReverseKind.GPL: ShuffleKind.RS,
}


@dataclass(frozen=True)
class GradcheckResult:
    head: str
    n: int
    n_params: int
    max_rel_error: float


def gradcheck_head(head, n=3, seed=0, d_model=8, h=1e-5, batch=4, T=2):
    """Compare analytic gradients of the trajectory loss with central differences.

    The error for each parameter tensor is ``max|analytic - numeric|``
    divided by ``max(max|numeric|, max|analytic|, 1e-4)``; the floor keeps
    tensors whose true gradient is zero (a shared bias under a shift-invariant
    softmax) from dividing rounding noise by zero.  The result is the worst
    tensor.  Every entry of every tensor is perturbed.
    """
    head = ReverseKind(head)
    rng = np.random.default_rng(seed)
    cfg = NetConfig(head=head.value, n=n, d_model=d_model, n_layers=2, n_heads=2, d_ff=2 * d_model)
    net = ScoreNet(cfg, rng)
    schedule = DenoisingSchedule.full(T)
    x0 = np.sort(rng.random((batch, n)), axis=1)[:, :, None]
    orders = sample_orders(FORWARD_FOR_HEAD[head], n, T, batch, rng)

    def value():
        return float(loss_full_trajectory(net, x0, orders, schedule).data)

    net.zero_grad()
    loss_full_trajectory(net, x0, orders, schedule).backward()
    worst = 0.0
    for p in net.params.values():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.shape):
            old = p.data[idx]
            p.data[idx] = old + h
            up = value()
            p.data[idx] = old - h
            down = value()
            p.data[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-4)
        err = np.abs(analytic - numeric).max() / scale
        worst = max(worst, float(err))
    return GradcheckResult(head.value, n, net.num_params(), worst)
