"""Numba dispatch.

Kernels are written once as plain Python loops and compiled with ``njit`` when
numba is importable and ``SEMILAB_NO_NUMBA`` is unset.  Every jitted kernel has
a vectorised numpy twin in :mod:`semilab._kernels`; ``USE_NUMBA`` decides which
one the public functions call.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _flag(name):
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAS_NUMBA and not _flag("SEMILAB_NO_NUMBA")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` or the identity decorator when numba is off."""
    if not USE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def configure_threads():
    """Apply the ``LAB_THREADS`` cap to numba's thread pool."""
    raw = os.environ.get("LAB_THREADS")
    if not raw or not USE_NUMBA:
        return None
    n = max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n
