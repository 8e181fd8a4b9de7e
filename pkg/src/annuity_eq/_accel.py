"""Backend switch for the hot kernels.

Kernels are written twice: a scalar-loop version compiled with numba and a
vectorised numpy version. ``ANNUITY_EQ_BACKEND=numpy`` (or a missing numba)
selects the numpy path; anything else uses numba. Tests flip the backend at
runtime with :func:`set_backend`.
"""

import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f

    logger.warning("numba not importable, using the numpy kernels")


def _initial_backend():
    requested = os.environ.get("ANNUITY_EQ_BACKEND", "numba").strip().lower()
    if requested not in ("numba", "numpy"):
        raise ValueError(f"ANNUITY_EQ_BACKEND must be 'numba' or 'numpy', got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        return "numpy"
    return requested


_backend = _initial_backend()


def backend():
    return _backend


def use_numba():
    return _backend == "numba"


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous
