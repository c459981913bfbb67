"""Import-time selection between the compiled and pure-numpy kernels.

The compiled extension is used when it imports cleanly.  Setting the
environment variable ``CUTOFFEIG_PURE_PYTHON=1`` forces the numpy
fallback, which is handy for debugging and for cross-checking the two.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("CUTOFFEIG_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        kernels = _kernels_py

BACKEND = kernels.BACKEND_NAME

__all__ = ["kernels", "BACKEND"]
