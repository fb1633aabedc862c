"""Backend selection for the compiled kernels.

``BINFAM_BACKEND=numpy`` forces the vectorised numpy path; the default is
``numba`` whenever numba imports cleanly.  ``BINFAM_THREADS`` caps the numba
thread pool.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_requested = os.environ.get("BINFAM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"BINFAM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = numba is not None
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"

if HAVE_NUMBA:
    njit = numba.njit(cache=True, nogil=True)
    _threads = os.environ.get("BINFAM_THREADS")
    if _threads:
        if "NUMBA_THREADING_LAYER" not in os.environ:
            # skip the TBB probe, which warns on old system TBB builds
            numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
        numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
else:  # pragma: no cover

    def njit(fn):
        return fn
