"""Hot loops: GRU recurrence and pairwise angular adjacency.

The active implementation is chosen once at import by :mod:`mmdfn._backend`.
Both implementations stay importable for benchmarks and cross-checks.
"""
from .. import _backend
from . import numpy_impl

if _backend.USE_NUMBA:
    from . import numba_impl as active
else:
    active = numpy_impl

BACKEND = _backend.BACKEND


def implementations():
    """Return ``{name: module}`` for every importable backend."""
    impls = {"numpy": numpy_impl}
    if _backend.HAVE_NUMBA:
        from . import numba_impl

        impls["numba"] = numba_impl
    return impls


__all__ = ["BACKEND", "active", "implementations", "numpy_impl"]
