"""JIT compilation switch for the hot numeric kernels.

Every kernel in :mod:`liquidrewire._kernels` is written once, in
numba-compatible numpy, and compiled with ``@njit`` unless the environment
variable ``LIQUIDREWIRE_NUMBA`` is set to ``0``/``false``/``off`` (or numba is
not importable), in which case the same function runs as plain Python/numpy.
Both variants of each kernel are kept importable so the benchmark
(``liquidrewire bench``) and the cross-check tests can compare them directly.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    numba = None

_FLAG = os.environ.get("LIQUIDREWIRE_NUMBA", "1").strip().lower()
NUMBA_ENABLED = numba is not None and _FLAG not in ("0", "false", "no", "off")

JIT_OPTIONS = {"nogil": True, "cache": True}


def maybe_njit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged."""
    if NUMBA_ENABLED:
        return numba.njit(**JIT_OPTIONS)(func)
    return func
