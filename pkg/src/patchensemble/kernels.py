"""Select the compiled kernels when available, else the numpy fallback.

Set ``PATCHENSEMBLE_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

MODE_PROPOSED = _kernels_py.MODE_PROPOSED
MODE_KTHRESHOLD = _kernels_py.MODE_KTHRESHOLD
MODE_MEAN = _kernels_py.MODE_MEAN
MODE_MEDIAN = _kernels_py.MODE_MEDIAN

_impl = _kernels_py
BACKEND = "python"
if not os.environ.get("PATCHENSEMBLE_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        pass


def available_backends():
    """Map backend name to kernel module for every importable implementation."""
    backends = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        backends["compiled"] = _kernels
    return backends


def aggregate_rows(scores, mode, k=1):
    return _impl.aggregate_rows(np.ascontiguousarray(scores, dtype=np.float64), mode, k)


def mann_whitney_counts(pos_sorted, neg_sorted):
    return _impl.mann_whitney_counts(
        np.ascontiguousarray(pos_sorted, dtype=np.float64),
        np.ascontiguousarray(neg_sorted, dtype=np.float64),
    )
