"""Kernel backend selection.

``SUBDOA_NUMBA=0`` forces the pure-numpy kernels, ``SUBDOA_NUMBA=1``
requires the numba ones (ImportError if numba is missing).  The default
tries numba and silently falls back to numpy.
"""

import os

from . import _kernels_numpy

_flag = os.environ.get("SUBDOA_NUMBA", "auto").strip().lower()

if _flag in ("0", "false", "no", "off"):
    kernels = _kernels_numpy
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as kernels  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        if _flag in ("1", "true", "yes", "on"):
            raise
        kernels = _kernels_numpy
        BACKEND = "numpy"


def backend_name() -> str:
    return BACKEND
