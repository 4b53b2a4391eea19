"""Kernel backend selection.

The compiled extension is used when it was built; set
``HYBRIDFD_PURE_PYTHON=1`` to force the pure-Python fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("HYBRIDFD_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels
    else:
        BACKEND = "cython"

contribution = _impl.contribution
suspicion_sum = _impl.suspicion_sum
window_stats = _impl.window_stats
threshold_runs = _impl.threshold_runs

SATURATION_LATENESS = _pykernels.SATURATION_LATENESS

__all__ = [
    "BACKEND",
    "SATURATION_LATENESS",
    "contribution",
    "suspicion_sum",
    "threshold_runs",
    "window_stats",
]
