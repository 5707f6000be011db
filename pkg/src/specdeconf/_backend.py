"""Kernel backend selection.

``SPECDECONF_BACKEND=numpy`` forces the pure-numpy kernels; otherwise the
numba kernels are used when numba imports cleanly.
"""

import os

_requested = os.environ.get("SPECDECONF_BACKEND", "numba").strip().lower()

if _requested not in ("numba", "numpy"):
    raise ImportError(f"SPECDECONF_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover
        HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"
