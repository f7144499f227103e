"""Kernel dispatch: the compiled ``_ext`` module when importable, else ``_kernels_py``.

Set ``GSSC_PURE_PYTHON=1`` to force the interpreted fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("GSSC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

scatter_add_rows = _impl.scatter_add_rows
cycle_counts = _impl.cycle_counts
path_counts = _impl.path_counts


def backends():
    """Every importable implementation, keyed by name (for benchmarks and tests)."""
    found = {"python": _kernels_py}
    try:
        from . import _ext

        found["cython"] = _ext
    except ImportError:
        pass
    return found
