"""Kernel backend selection.

Hot loops ship twice: a numba ``@njit`` version and a pure-numpy version with
identical results. ``CS_MBDCT_BACKEND=numpy`` forces the numpy path; the
default uses numba when it imports cleanly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
    # an old system TBB triggers a warning on first parallel launch; try OpenMP
    # first unless the user chose an order
    if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

ENV_VAR = "CS_MBDCT_BACKEND"


def default_backend() -> str:
    choice = os.environ.get(ENV_VAR, "numba").strip().lower()
    if choice not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        return "numpy"
    return choice


def resolve(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
