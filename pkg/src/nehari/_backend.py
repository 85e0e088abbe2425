"""Kernel backend selection.

The compiled extension is used when it imports; set ``NEHARI_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _fallback

if os.environ.get("NEHARI_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _fallback
        BACKEND = "python"

apply_stencil = kernels.apply_stencil
weighted_dot = kernels.weighted_dot
cg_update = kernels.cg_update
