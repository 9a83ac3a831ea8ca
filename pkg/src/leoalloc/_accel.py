"""Numba switch.

Set ``LEOALLOC_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
implementation instead of the compiled loops.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_DISABLED = os.environ.get("LEOALLOC_DISABLE_NUMBA", "").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)
HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED


def njit(fn):
    """Compile ``fn`` in nopython mode, or hand it back untouched without numba."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)

