"""Kernel backend selection.

The compiled extension is used when importable; set ``LINEVEC_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active implementation.
"""

import os

from . import _kernels_py

if os.environ.get("LINEVEC_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

rect_moments = _impl.rect_moments
capsule_coverage = _impl.capsule_coverage
line_scan = _impl.line_scan
