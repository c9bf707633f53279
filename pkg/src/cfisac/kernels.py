"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise (or when
``CFISAC_PURE_PYTHON=1`` is set) the numpy implementations are used. Both
backends stay importable for equivalence tests and benchmarks.
"""
import os

from . import _kernels_py as python_backend

try:
    from . import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("CFISAC_PURE_PYTHON", "") not in ("1", "true"):
    _active = compiled_backend
    BACKEND = "cython"
else:
    _active = python_backend
    BACKEND = "python"

N_FEATURES = python_backend.N_FEATURES
solve_rays = _active.solve_rays
single_linkage = _active.single_linkage
residual_features = _active.residual_features

__all__ = [
    "BACKEND",
    "N_FEATURES",
    "compiled_backend",
    "python_backend",
    "residual_features",
    "single_linkage",
    "solve_rays",
]
