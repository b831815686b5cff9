"""AdamW with decoupled weight decay."""
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AdamWConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def to_dict(self):
        return asdict(self)


def adamw_step(param, grad, m, v, step, cfg):
    """One in-place update of ``param`` and its moment buffers.

    ``step`` is the 1-based step count used for bias correction.  The decay
    multiplies the parameter before the Adam increment is applied.
    """
    param *= 1.0 - cfg.lr * cfg.weight_decay
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    param -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


class AdamW:
    def __init__(self, params, cfg=AdamWConfig()):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.step_count += 1
        for name, p in self.params.items():
            grad = np.zeros_like(p.data) if p.grad is None else p.grad
            adamw_step(p.data, grad, self.m[name], self.v[name], self.step_count, self.cfg)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {
            "step": self.step_count,
            "m": {k: a.copy() for k, a in self.m.items()},
            "v": {k: a.copy() for k, a in self.v.items()},
        }

    def load_state_dict(self, state):
        self.step_count = int(state["step"])
        for key in ("m", "v"):
            buf = getattr(self, key)
            for name in buf:
                buf[name] = np.array(state[key][name], dtype=np.float64).reshape(buf[name].shape)
