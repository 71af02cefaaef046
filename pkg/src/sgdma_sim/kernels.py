"""Kernel backend selection.

The compiled kernel is used when it imports; otherwise the pure-Python one.
Setting ``SGDMA_SIM_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("SGDMA_SIM_PURE_PYTHON") == "1":
    _impl = _kernel_py
else:
    try:
        from . import _kernel_c as _impl
    except ImportError:  # extension not built
        _impl = _kernel_py

BACKEND = "compiled" if _impl is not _kernel_py else "python"
simulate = _impl.simulate
simulate_python = _kernel_py.simulate
