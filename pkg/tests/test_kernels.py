import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from symdiff import kernels
from symdiff.perm import sn_array


def both(name, *args):
    loops, vectorised = kernels.IMPLEMENTATIONS[name]
    args = tuple(np.ascontiguousarray(a) for a in args)
    return loops(*args), vectorised(*args)


@given(st.integers(1, 12), st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_backends_agree(n, m, seed):
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((m, n)), axis=1)
    cases = {
        "riffle_interleave": (rng.binomial(n, 0.5, size=m), rng.random((m, n))),
        "riffle_geometric": (rng.random((m, n)),),
        "rising_sequences": (perms,),
        "perm_rank": (perms,),
        "gumbel_plackett_luce": (rng.normal(size=(m, n, n)), rng.gumbel(size=(m, n, n))),
    }
    for name, args in cases.items():
        a, b = both(name, *args)
        assert np.array_equal(a, b), name


def test_riffle_geometric_tie_goes_left():
    # 0.25 and 0.75 double to the same key 0.5; the left-pile card comes first
    a, b = both("riffle_geometric", np.array([[0.75, 0.25]]))
    assert a.tolist() == b.tolist() == [[0, 1]]


def test_perm_rank_is_lexicographic():
    for n in range(1, 6):
        ranks = kernels.perm_rank(sn_array(n))
        assert ranks.tolist() == list(range(len(ranks)))


def test_perm_rank_guard():
    with pytest.raises(ValueError):
        kernels.perm_rank(np.arange(21)[None])


def test_gumbel_pl_uses_each_column_once(rng):
    out = kernels.gumbel_plackett_luce(rng.normal(size=(5, 5)), rng.gumbel(size=(100, 5, 5)))
    assert np.all(np.sort(out, axis=1) == np.arange(5))


def test_riffle_outputs_have_two_rising_sequences(rng):
    for name in ("riffle_interleave", "riffle_geometric"):
        args = (rng.binomial(9, 0.5, size=500), rng.random((500, 9))) if name == "riffle_interleave" else (rng.random((500, 9)),)
        out = both(name, *args)[0]
        assert kernels.rising_sequences(out).max() <= 2


SNIPPET = """
import json, numpy as np
from symdiff import kernels, shuffles
rng = np.random.default_rng(5)
print(json.dumps({"backend": kernels.BACKEND,
                  "rs": shuffles.sample_steps("RS", 7, 50, rng).tolist(),
                  "gsr": shuffles.riffle_gsr(7, 50, rng).tolist()}))
"""


def _run(env_value):
    env = dict(os.environ)
    env.pop("SYMDIFF_NO_JIT", None)
    if env_value is not None:
        env["SYMDIFF_NO_JIT"] = env_value
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_env_flag_switches_backend_with_identical_draws():
    jit, plain = _run(None), _run("1")
    assert jit["backend"] == "numba"
    assert plain["backend"] == "numpy"
    assert jit["rs"] == plain["rs"] and jit["gsr"] == plain["gsr"]
