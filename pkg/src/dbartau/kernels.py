"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the NumPy
fallback.  Set ``DBARTAU_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("DBARTAU_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py

cauchy_matrix = _impl.cauchy_matrix
cauchy_sum = _impl.cauchy_sum
integrable_kernel_matrix = _impl.integrable_kernel_matrix

__all__ = ["BACKEND", "cauchy_matrix", "cauchy_sum", "integrable_kernel_matrix"]
