"""Kernel backend selection.

Set ``MMDFN_DISABLE_NUMBA=1`` (or ``MMDFN_BACKEND=numpy``) before import to force
the pure-numpy kernels. numba is used when importable otherwise.
"""
import os

_TRUTHY = {"1", "true", "yes", "on"}


def _numba_requested() -> bool:
    if os.environ.get("MMDFN_DISABLE_NUMBA", "").strip().lower() in _TRUTHY:
        return False
    return os.environ.get("MMDFN_BACKEND", "numba").strip().lower() != "numpy"


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"
