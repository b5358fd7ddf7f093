"""Backend selection for the hot numeric kernels.

Set ``METABBO_BACKEND=numpy`` to force the pure-numpy path. The default is
``numba`` when it imports, otherwise numpy.
"""

from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

_requested = os.environ.get("METABBO_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"METABBO_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def njit(fn):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise.

    The kernels keep both variants around regardless of BACKEND so the
    benchmark and the equivalence tests can call either one.
    """
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
