"""JSON checkpoints for a score network and its optimiser.

Floats are written with ``repr`` precision so a reload continues training
bit-identically.  The numpy ``Generator`` state is stored alongside.
"""
import json

import numpy as np

from ..io import atomic_write_text
from .net import NetConfig, ScoreNet
from .optim import AdamW, AdamWConfig

FORMAT_VERSION = 1


def _encode(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _decode(doc):
    return np.array(doc["data"], dtype=np.float64).reshape(doc["shape"])


def checkpoint_dict(net, optimizer=None, rng=None, extra=None):
    doc = {
        "format_version": FORMAT_VERSION,
        "net_config": net.config.to_dict(),
        "params": {k: _encode(v) for k, v in net.state_dict().items()},
    }
    if optimizer is not None:
        st = optimizer.state_dict()
        doc["optimizer"] = {
            "config": optimizer.cfg.to_dict(),
            "step": st["step"],
            "m": {k: _encode(v) for k, v in st["m"].items()},
            "v": {k: _encode(v) for k, v in st["v"].items()},
        }
    if rng is not None:
        doc["rng_state"] = rng.bit_generator.state
    if extra:
        doc["extra"] = extra
    return doc


def save_checkpoint(path, net, optimizer=None, rng=None, extra=None):
    doc = checkpoint_dict(net, optimizer, rng, extra)
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")


def restore(doc):
    """``(net, optimizer or None, rng or None, extra)`` from a checkpoint dict."""
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    net = ScoreNet(NetConfig(**doc["net_config"]), np.random.default_rng(0))
    net.load_state_dict({k: _decode(v) for k, v in doc["params"].items()})
    optimizer = None
    if "optimizer" in doc:
        opt = doc["optimizer"]
        optimizer = AdamW(net.params, AdamWConfig(**opt["config"]))
        optimizer.load_state_dict({
            "step": opt["step"],
            "m": {k: _decode(v) for k, v in opt["m"].items()},
            "v": {k: _decode(v) for k, v in opt["v"].items()},
        })
    rng = None
    if "rng_state" in doc:
        rng = np.random.default_rng()
        rng.bit_generator.state = doc["rng_state"]
    return net, optimizer, rng, doc.get("extra", {})


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        return restore(json.load(fh))
