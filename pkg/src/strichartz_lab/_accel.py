"""JIT backend switch.

The hot loops in :mod:`strichartz_lab._compute` come in two flavours: a
numba ``@njit`` kernel and a pure-numpy fallback.  The numba path is used when
numba imports and the environment variable ``STRICHARTZ_LAB_NUMBA`` is not set
to a false value (``0``, ``false``, ``no``, ``off``).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

__all__ = ["HAVE_NUMBA", "njit", "numba_enabled", "set_threads"]

HAVE_NUMBA = numba is not None
USE_NUMBA = os.environ.get("STRICHARTZ_LAB_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(f=None, **setting):
    setting.setdefault("cache", True)
    if numba is None:
        if f is None:
            return lambda g: g
        return f
    if f is None:
        return lambda g: numba.njit(g, **setting)
    return numba.njit(f, **setting)


def numba_enabled():
    return HAVE_NUMBA and USE_NUMBA


def set_threads(k):
    """Cap numba worker threads; a no-op without numba."""
    if numba is not None and k is not None:
        numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))
