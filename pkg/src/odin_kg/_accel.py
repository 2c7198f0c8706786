"""JIT switch for the hot kernels.

Set ``ODIN_KG_NUMBA=0`` (or numba's own ``NUMBA_DISABLE_JIT=1``) to run the
pure-numpy implementations instead of the compiled ones.
"""

import os

_FLAG = os.getenv("ODIN_KG_NUMBA", "1").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False

USE_NUMBA = (
    HAVE_NUMBA
    and _FLAG not in ("0", "false", "no", "off")
    and os.getenv("NUMBA_DISABLE_JIT", "0") in ("", "0")
)

NUMBA_OPTS = {"cache": True, "nogil": True}


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it untouched."""
    if not HAVE_NUMBA:
        return fn
    from numba import njit as _njit

    return _njit(**NUMBA_OPTS)(fn)
