"""Optional numba acceleration.

Hot kernels are written twice: a loop version compiled with numba and a
vectorised numpy version. ``PERMOM_BACKEND=numpy`` (or a missing numba
install) selects the numpy path; the benchmark script times both.
"""
from __future__ import annotations

import os

try:
    import numba as _numba

    HAS_NUMBA = True
    # the system TBB is often too old; prefer threading layers that always work
    _numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None
    HAS_NUMBA = False

prange = _numba.prange if HAS_NUMBA else range

_NUMBA_OPTIONS = {"nopython": True, "cache": True, "nogil": True, "fastmath": False}


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults, or an identity decorator."""
    opts = {**_NUMBA_OPTIONS, **kwargs}
    if not HAS_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return _numba.jit(**opts)(args[0])
    return _numba.jit(*args, **opts)


def _backend_from_env() -> str:
    val = os.environ.get("PERMOM_BACKEND", "").strip().lower()
    if val in ("numpy", "python", "off", "0"):
        return "numpy"
    return "numba" if HAS_NUMBA else "numpy"


_backend = _backend_from_env()


def backend() -> str:
    """Name of the active kernel backend (``"numba"`` or ``"numpy"``)."""
    return _backend


def set_backend(name: str) -> str:
    """Switch kernel backend at runtime; returns the previous one."""
    global _backend
    name = name.lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev


def use_numba() -> bool:
    return _backend == "numba"


def set_threads(n: int | None) -> None:
    """Cap numba's thread pool; ``None`` keeps the default."""
    if n is None or not HAS_NUMBA:
        return
    n = max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS))
    _numba.set_num_threads(n)
