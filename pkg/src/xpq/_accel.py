"""JIT switch for the numeric kernels.

Set ``XPQ_DISABLE_NUMBA=1`` (before import) to run every kernel as plain
Python over numpy arrays. Results are bit-identical either way.
"""

import os

_disabled = os.environ.get("XPQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba

    HAS_NUMBA = True

    def njit(fn):
        return numba.njit(cache=True, nogil=True)(fn)

except ImportError:
    HAS_NUMBA = False

    def njit(fn):
        return fn


def backend_name():
    return "numba" if HAS_NUMBA else "numpy"
