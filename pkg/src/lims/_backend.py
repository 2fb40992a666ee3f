"""Select the iteration kernel at import time.

The compiled extension is preferred; the NumPy twin is used when the
extension is unavailable or when LIMS_PURE_PYTHON is set (useful for
debugging and for the backend benchmark).
"""

import os

from . import _kernel_py

if os.environ.get("LIMS_PURE_PYTHON"):
    kernel = _kernel_py
    BACKEND = "python"
else:
    try:
        from . import _kernel as kernel  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        kernel = _kernel_py
        BACKEND = "python"


def available_backends():
    """Name -> kernel module for every importable backend."""
    out = {"python": _kernel_py}
    try:
        from . import _kernel
        out["cython"] = _kernel
    except ImportError:
        pass
    return out
