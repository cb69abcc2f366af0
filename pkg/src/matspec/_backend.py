"""Pick the ODE kernel at import: compiled if available, numpy otherwise.

Set ``MATSPEC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _ode_py

if os.environ.get("MATSPEC_PURE_PYTHON", "") not in ("", "0"):
    rk4_batch = _ode_py.rk4_batch
    BACKEND = "python"
else:
    try:
        from ._ode import rk4_batch
        BACKEND = "compiled"
    except ImportError:  # extension not built
        rk4_batch = _ode_py.rk4_batch
        BACKEND = "python"
