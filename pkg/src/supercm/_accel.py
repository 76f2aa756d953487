"""Backend selection for the hot kernels.

Numba is used when importable unless ``SUPERCM_NUMBA=0`` is set in the
environment before import. Every jitted kernel has a pure-numpy twin so the
two paths can be compared (see ``benchmarks/bench_kernels.py``).
"""
import os

_FLAG = os.environ.get("SUPERCM_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by SUPERCM_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def maybe_njit(fn):
    """Compile ``fn`` with ``numba.njit(cache=True)`` when the backend is on."""
    if NUMBA_ENABLED:
        return _njit(cache=True, fastmath=False)(fn)
    return fn


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
