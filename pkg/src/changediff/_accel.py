"""Optional numba acceleration.

Set ``CHANGEDIFF_DISABLE_NUMBA=1`` to force the pure-numpy code paths, even when
numba is importable. The flag is read once at import time.
"""
import os

_disabled = os.environ.get("CHANGEDIFF_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

HAS_NUMBA = False
if not _disabled:
    try:
        import numba

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        numba = None

njit_options = {"cache": False, "nogil": True}


def njit(fn):
    """``numba.njit`` when acceleration is enabled, otherwise ``None``."""
    if not HAS_NUMBA:
        return None
    return numba.njit(**njit_options)(fn)
