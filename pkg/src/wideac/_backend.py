"""Select the compiled or pure-numpy training kernels.

numba is used when importable unless ``WIDEAC_DISABLE_NUMBA`` is set to a
truthy value.  The choice is made once at import time.
"""
import os

from . import _kernels_numpy

ENV_FLAG = "WIDEAC_DISABLE_NUMBA"

try:
    from . import _kernels_numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _kernels_numba = None
    HAS_NUMBA = False


def numba_disabled() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


def get_kernels(name: str | None = None):
    """Return the kernel module for ``name`` ("numba", "numpy" or None for the default)."""
    if name is None:
        name = "numba" if HAS_NUMBA and not numba_disabled() else "numpy"
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return _kernels_numba
    if name == "numpy":
        return _kernels_numpy
    raise ValueError(f"unknown backend {name!r}")


kernels = get_kernels()
BACKEND = "numba" if kernels is _kernels_numba else "numpy"
