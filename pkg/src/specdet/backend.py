"""Kernel backend selection: numba-jitted loops or the pure-Python fallback.

The hot integration loops in :mod:`specdet.kernels` are written once and
compiled twice.  By default they run under ``numba.njit``; setting the
environment variable ``SPECDET_BACKEND=numpy`` (or calling
:func:`set_backend`) switches every dispatch to the interpreted fallback,
which produces bit-identical control flow at Python speed.  The fallback is
also what custom (callable-defined) potentials always use, since arbitrary
Python callables cannot cross into nopython code.

``SPECDET_THREADS`` caps the worker count used for embarrassingly parallel
grid evaluation (kernels are compiled with ``nogil=True`` so threads scale).
"""

from __future__ import annotations

import os

ENV_BACKEND = "SPECDET_BACKEND"
ENV_THREADS = "SPECDET_THREADS"

_VALID = ("numba", "numpy")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    numba = None
    HAVE_NUMBA = False


def _initial_backend() -> str:
    raw = os.environ.get(ENV_BACKEND, "").strip().lower()
    if raw in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if raw not in _VALID:
        raise ValueError(
            f"{ENV_BACKEND} must be one of {_VALID} (or unset), got {raw!r}"
        )
    if raw == "numba" and not HAVE_NUMBA:
        raise RuntimeError(f"{ENV_BACKEND}=numba requested but numba is not importable")
    return raw


_active = _initial_backend()


def get_backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return _active


def set_backend(name: str) -> None:
    """Switch the kernel backend at runtime (used by the benchmark)."""
    global _active
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _active = name


def using_numba() -> bool:
    return _active == "numba"


def jit_kernel(fn):
    """Compile ``fn`` as a nopython kernel; identity when numba is absent."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True, fastmath=False)(fn)


def thread_count() -> int:
    """Worker cap for data-parallel evaluation (``SPECDET_THREADS``)."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return n
