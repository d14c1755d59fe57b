"""Kernel selection: compiled extension when built, numpy fallback otherwise.

Set ``COMPMR_PURE=1`` to force the fallback.
"""

import os

from . import _align_py

BACKEND = "python"
mismatches = _align_py.mismatches
breakpoints = _align_py.breakpoints

if os.environ.get("COMPMR_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        mismatches = _kernels.mismatches
        breakpoints = _kernels.breakpoints
