"""Numba switch.

Set ``SYMDIFF_NO_JIT=1`` to run every kernel on its vectorised numpy path.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_DISABLED = os.environ.get("SYMDIFF_NO_JIT", "").strip().lower() not in ("", "0", "false", "no")
JIT_ENABLED = numba is not None and not JIT_DISABLED
BACKEND = "numba" if JIT_ENABLED else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when enabled, else return it untouched."""
    if JIT_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn
