"""Backend selection for the numerical kernels.

The compiled extension is used when it imports; otherwise the NumPy
fallback. Set ``HOUSESPLIT_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("HOUSESPLIT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

grouped_normal_equations = _impl.grouped_normal_equations
assign_min_residual = _impl.assign_min_residual
veronese = _impl.veronese
veronese_gradient = _impl.veronese_gradient

__all__ = [
    "BACKEND",
    "grouped_normal_equations",
    "assign_min_residual",
    "veronese",
    "veronese_gradient",
]
