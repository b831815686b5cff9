import zlib

import numpy as np
import pytest

from symdiff.model import autodiff as ad
from symdiff.model.autodiff import Tensor


def numeric_grad(fn, x, h=1e-5):
    """Central differences of scalar ``fn`` at numpy array ``x``."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_error(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


def check_op(build, *shapes, seed=0, tol=1e-6):
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    weights = rng.normal(size=build(*[Tensor(a) for a in arrays]).shape)
    for i in range(len(arrays)):
        tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        (build(*tensors) * Tensor(weights)).sum().backward()

        def value(x, i=i):
            args = [Tensor(x if j == i else a) for j, a in enumerate(arrays)]
            return float((build(*args).data * weights).sum())

        num = numeric_grad(value, arrays[i].copy())
        assert rel_error(tensors[i].grad, num) < tol


def test_relu_example():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    ad.relu(x).sum().backward()
    assert x.grad.tolist() == [0.0, 1.0]


def test_softmax_finite_differences():
    check_op(lambda x: ad.softmax(x, axis=-1), (4, 4), seed=1, tol=1e-6)


@pytest.mark.parametrize("name, build, shapes", [
    ("matmul", lambda a, b: a @ b, [(3, 4), (4, 2)]),
    ("batched_matmul", lambda a, b: a @ b, [(2, 3, 4), (4, 5)]),
    ("add_broadcast", lambda a, b: a + b, [(3, 4), (4,)]),
    ("mul_broadcast", lambda a, b: a * b, [(2, 3), (2, 1)]),
    ("sub", lambda a, b: a - b, [(3,), (3,)]),
    ("logsumexp", lambda x: ad.logsumexp(x, axis=1), [(3, 5)]),
    ("log_softmax", lambda x: ad.log_softmax(x, axis=0), [(4, 3)]),
    ("log_sigmoid", lambda x: ad.log_sigmoid(x), [(6,)]),
    ("transpose_reshape", lambda x: ad.reshape(ad.transpose(x, (1, 0, 2)), (3, 8)), [(2, 3, 4)]),
    ("concat", lambda a, b: ad.concat([a, b], axis=1), [(2, 3), (2, 2)]),
    ("gather", lambda x: ad.gather(x, (slice(None), slice(1, 3))), [(3, 4)]),
    ("take_along_axis", lambda x: ad.take_along_axis(x, np.array([[2, 0, 0], [1, 1, 3]]), axis=1),
     [(2, 4)]),
    ("embedding", lambda w: ad.embedding(w, [0, 2, 2, 1]), [(3, 4)]),
    ("mean", lambda x: ad.mean(x, axis=0), [(5, 2)]),
])
def test_op_gradients(name, build, shapes):
    check_op(build, *shapes, seed=zlib.crc32(name.encode()) % 1000, tol=1e-6)


def test_masked_attention_gradients():
    mask = np.array([[0.0, -np.inf, -np.inf], [0.0, 0.0, -np.inf], [0.0, 0.0, 0.0]])
    check_op(lambda q, k, v: ad.masked_attention(q, k, v, mask), (2, 3, 4), (2, 3, 4), (2, 3, 4),
             seed=3, tol=1e-6)


def test_masked_attention_blocks():
    rng = np.random.default_rng(0)
    q, k, v = (Tensor(rng.normal(size=(3, 2))) for _ in range(3))
    mask = np.array([[0.0, -np.inf, -np.inf], [0.0, 0.0, -np.inf], [0.0, 0.0, 0.0]])
    out = ad.masked_attention(q, k, v, mask).data
    assert np.allclose(out[0], v.data[0])


def test_gradients_accumulate_over_reuse():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad.tolist() == [3.0, 5.0]


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert y._backward is None and not y.requires_grad


def test_backward_needs_scalar():
    with pytest.raises(ValueError):
        (Tensor(np.ones(3), requires_grad=True) * 2.0).backward()


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
