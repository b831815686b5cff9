"""Permutations of ``[n]`` in one-line notation.

Internally 0-based: ``sigma.mapping[i] == sigma(i)``.  Everything that
crosses a serialisation boundary (JSON, CSV, ``repr``) is 1-based.

Conventions fixed here and relied on everywhere else:

* ``compose(a, b)`` is function composition, ``(a o b)(i) = a(b(i))``.
* ``apply(sigma, X)`` returns ``X[sigma.mapping]``: row ``i`` of the result
  is row ``sigma(i)`` of ``X``.
* Consequently ``apply(compose(a, b), X) == apply(b, apply(a, X))``.
"""
import itertools
import math

import numpy as np

from . import kernels

MAX_ENUMERATE_N = 8


class Permutation:
    """Immutable bijection of ``{0, ..., n-1}``."""

    __slots__ = ("_m", "_key")

    def __init__(self, mapping):
        m = np.array(mapping, dtype=np.int64).reshape(-1)
        n = m.size
        if n < 1:
            raise ValueError("permutation needs n >= 1")
        seen = np.zeros(n, dtype=bool)
        if m.min() < 0 or m.max() >= n:
            raise ValueError(f"entries must lie in [0, {n}), got {m.tolist()}")
        seen[m] = True
        if not seen.all():
            raise ValueError(f"not a bijection: {m.tolist()}")
        m.setflags(write=False)
        self._m = m
        self._key = tuple(int(v) for v in m)

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n))

    @classmethod
    def from_one_based(cls, values):
        return cls(np.asarray(values, dtype=np.int64) - 1)

    def to_one_based(self):
        return [v + 1 for v in self._key]

    @property
    def mapping(self):
        return self._m

    @property
    def n(self):
        return self._m.size

    def __len__(self):
        return self._m.size

    def __call__(self, i):
        return self._key[i]

    def is_identity(self):
        return bool(np.all(self._m == np.arange(self.n)))

    def __eq__(self, other):
        if not isinstance(other, Permutation):
            return NotImplemented
        return self._key == other._key

    def __lt__(self, other):
        return self._key < other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"Permutation({self.to_one_based()})"


def compose(a, b):
    """``a o b``: first ``b``, then ``a``."""
    if a.n != b.n:
        raise ValueError(f"size mismatch: {a.n} vs {b.n}")
    return Permutation(a.mapping[b.mapping])


def inverse(a):
    inv = np.empty(a.n, dtype=np.int64)
    inv[a.mapping] = np.arange(a.n)
    return Permutation(inv)


def apply(sigma, X):
    """Permute the rows of ``X``; row ``i`` of the result is row ``sigma(i)``."""
    X = np.asarray(X)
    if X.shape[0] != sigma.n:
        raise ValueError(f"permutation of size {sigma.n} applied to {X.shape[0]} rows")
    return X[sigma.mapping]


def rising_sequences(sigma):
    """Number of maximal runs of consecutive values appearing left to right."""
    return int(kernels.rising_sequences(sigma.mapping[None])[0])


def enumerate_sn(n):
    """All of S_n in lexicographic order of one-line notation."""
    if not 1 <= n <= MAX_ENUMERATE_N:
        raise ValueError(f"enumerate_sn supports 1 <= n <= {MAX_ENUMERATE_N}, got {n}")
    for p in itertools.permutations(range(n)):
        yield Permutation(p)


def sn_array(n):
    """S_n as an ``(n!, n)`` int array, same order as :func:`enumerate_sn`."""
    if not 1 <= n <= MAX_ENUMERATE_N:
        raise ValueError(f"sn_array supports 1 <= n <= {MAX_ENUMERATE_N}, got {n}")
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(math.factorial(n), n)


def random_uniform(n, rng):
    """Fisher-Yates draw from the uniform distribution on S_n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Permutation(rng.permutation(n))


# batched helpers on raw (m, n) arrays

def compose_arrays(a, b):
    return np.take_along_axis(a, b, axis=-1)


def inverse_arrays(a):
    inv = np.empty_like(a)
    np.put_along_axis(inv, a, np.broadcast_to(np.arange(a.shape[-1]), a.shape), axis=-1)
    return inv


def to_json_value(sigma):
    return sigma.to_one_based()


def from_json_value(values):
    return Permutation.from_one_based(values)
