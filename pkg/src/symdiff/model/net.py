"""Masked-attention score network producing reverse-transition scores.

Input rows of ``X_t`` are tokens.  An MLP encoder plus a sinusoidal time
embedding feeds a stack of residual self-attention blocks (no layer norm, no
positional encoding on input tokens, so the network is equivariant to the
order of its input rows).  The output head depends on the reverse family:

* IT  - one zero dummy token is appended; an MLP maps the ``n+1`` outputs
  to ``(s_1..s_n, tau)``.
* II, IRS, PL - an MLP maps the ``n`` outputs to ``s``.
* GPL - ``n`` learned dummy tokens are appended under a causal mask and
  ``S = Z_dummy @ Z_input^T / sqrt(d_model)``; row ``i`` belongs to output
  position ``i``.
"""
from dataclasses import asdict, dataclass

import numpy as np

from ..reverse import ReverseKind, ReverseParams, as_reverse_kind
from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class NetConfig:
    head: str = "GPL"
    n: int = 8
    d_in: int = 1
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64

    def __post_init__(self):
        object.__setattr__(self, "head", as_reverse_kind(self.head).value)
        if self.d_model % 2 or self.d_model % self.n_heads:
            raise ValueError("d_model must be even and divisible by n_heads")

    def to_dict(self):
        return asdict(self)


def time_embed(t, d_model):
    """Sinusoidal embedding; ``t`` scalar -> ``(d,)``, array ``(B,)`` -> ``(B, d)``."""
    if d_model % 2:
        raise ValueError("d_model must be even")
    half = d_model // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    args = np.asarray(t, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def gpl_mask(n):
    """Additive ``2n x 2n`` mask: inputs see inputs; dummy ``j`` sees inputs and dummies ``< j``."""
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = -np.inf
    M[n:, n:] = np.where(np.tril(np.ones((n, n)), k=-1) > 0, 0.0, -np.inf)
    return M


class ScoreNet:
    def __init__(self, config, rng):
        self.config = config
        self.head = as_reverse_kind(config.head)
        d, ff = config.d_model, config.d_ff

        def w(fan_in, fan_out, scale=1.0):
            return Tensor(rng.normal(0.0, scale / np.sqrt(fan_in), (fan_in, fan_out)), True)

        def b(size):
            return Tensor(np.zeros(size), True)

        p = {
            "enc.w1": w(config.d_in, d), "enc.b1": b(d),
            "enc.w2": w(d, d), "enc.b2": b(d),
        }
        resid = 1.0 / np.sqrt(2 * config.n_layers)
        for layer in range(config.n_layers):
            pre = f"layer{layer}."
            p[pre + "wq"] = w(d, d)
            p[pre + "wk"] = w(d, d)
            p[pre + "wv"] = w(d, d)
            p[pre + "wo"] = w(d, d, resid)
            p[pre + "ff.w1"] = w(d, ff)
            p[pre + "ff.b1"] = b(ff)
            p[pre + "ff.w2"] = w(ff, d, resid)
            p[pre + "ff.b2"] = b(d)
        if self.head is ReverseKind.GPL:
            p["gpl.dummy"] = Tensor(rng.normal(0.0, 1.0, (config.n, d)), True)
        else:
            p["head.w1"] = w(d, d)
            p["head.b1"] = b(d)
            p["head.w2"] = w(d, 1)
            p["head.b2"] = b(1)
        self.params = dict(sorted(p.items()))

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def num_params(self):
        return sum(t.data.size for t in self.params.values())

    def _attention_block(self, x, layer, mask):
        p = self.params
        pre = f"layer{layer}."
        B, L, d = x.shape
        h = self.config.n_heads
        dk = d // h

        def split(t):
            return ad.transpose(ad.reshape(t, (B, L, h, dk)), (0, 2, 1, 3))

        q = split(x @ p[pre + "wq"])
        k = split(x @ p[pre + "wk"])
        v = split(x @ p[pre + "wv"])
        att = ad.masked_attention(q, k, v, mask)
        att = ad.reshape(ad.transpose(att, (0, 2, 1, 3)), (B, L, d))
        x = x + att @ p[pre + "wo"]
        f = ad.relu(x @ p[pre + "ff.w1"] + p[pre + "ff.b1"]) @ p[pre + "ff.w2"] + p[pre + "ff.b2"]
        return x + f

    def forward(self, X, t, dummy_override=None):
        """Raw head output for a batch.

        ``X`` is ``(B, n, d_in)``, ``t`` an int or ``(B,)``.  Returns a tensor
        of shape ``(B, n+1)`` (IT), ``(B, n)`` (II/IRS/PL) or ``(B, n, n)`` (GPL).
        ``dummy_override`` replaces the GPL dummy inputs (used by mask probes).
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        B, n, d_in = X.shape
        cfg, p = self.config, self.params
        if d_in != cfg.d_in:
            raise ValueError(f"expected {cfg.d_in} features per object, got {d_in}")
        t = np.broadcast_to(np.asarray(t), (B,))
        hid = ad.relu(Tensor(X) @ p["enc.w1"] + p["enc.b1"])
        y = hid @ p["enc.w2"] + p["enc.b2"] + Tensor(time_embed(t, cfg.d_model)[:, None, :])

        mask = None
        if self.head is ReverseKind.GPL:
            if n > cfg.n:
                raise ValueError(f"GPL head built for n <= {cfg.n}, got {n}")
            dummy = p["gpl.dummy"] if dummy_override is None else Tensor(dummy_override)
            dummies = ad.gather(dummy, slice(0, n)) + Tensor(np.zeros((B, 1, 1)))
            x = ad.concat([y, dummies], axis=1)
            mask = gpl_mask(n)
        elif self.head is ReverseKind.IT:
            x = ad.concat([y, Tensor(np.zeros((B, 1, cfg.d_model)))], axis=1)
        else:
            x = y

        for layer in range(cfg.n_layers):
            x = self._attention_block(x, layer, mask)

        if self.head is ReverseKind.GPL:
            z_in = ad.gather(x, (slice(None), slice(0, n)))
            z_out = ad.gather(x, (slice(None), slice(n, 2 * n)))
            return ad.mul(z_out @ ad.transpose(z_in, (0, 2, 1)), 1.0 / np.sqrt(cfg.d_model))
        hid = ad.relu(x @ p["head.w1"] + p["head.b1"])
        out = hid @ p["head.w2"] + p["head.b2"]
        return ad.reshape(out, out.shape[:2])

    def scores(self, X, t):
        """Raw scores as a numpy array, no graph."""
        with ad.no_grad():
            return self.forward(X, t).data

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise ValueError(f"parameter names differ: {sorted(missing)}")
        for k, v in state.items():
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != self.params[k].shape:
                raise ValueError(f"{k}: shape {arr.shape} != {self.params[k].shape}")
            self.params[k].data = arr.copy()


def forward_scores(net, X_t, t):
    """``ReverseParams`` for a single ranked list ``X_t`` at time ``t``."""
    X_t = np.asarray(X_t, dtype=np.float64)
    if X_t.ndim == 1:
        X_t = X_t[:, None]
    raw = net.scores(X_t[None], np.array([t]))[0]
    return ReverseParams.from_raw(net.head, raw)
