"""Kernel backend selection: compiled extension if available, numpy otherwise.

Set THINBINGHAM_PURE_PYTHON=1 to force the numpy backend (used by the
benchmark to compare both).
"""

import os

from . import _kernels_py

if os.environ.get("THINBINGHAM_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[no-redef]
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

group_magnitude = _impl.group_magnitude
shrink = _impl.shrink
shrink_smoothed = _impl.shrink_smoothed
