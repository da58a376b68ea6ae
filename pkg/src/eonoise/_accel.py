"""JIT switch.

Set ``EONOISE_DISABLE_JIT=1`` before import to force the pure-numpy kernels,
even when numba is installed.
"""

import os



def _jit_disabled():
    return os.environ.get("EONOISE_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_JIT = HAS_NUMBA and not _jit_disabled()


def njit(func):
    """Compile ``func`` with numba in nopython mode, or return it unchanged."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
