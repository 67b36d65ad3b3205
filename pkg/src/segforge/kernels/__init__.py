"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy backend is
the fallback. Override with SEGFORGE_KERNELS={auto,native,numpy}.
"""

import os

from . import numpy_backend

_choice = os.environ.get("SEGFORGE_KERNELS", "auto").lower()
if _choice not in ("auto", "native", "numpy"):
    raise ValueError(f"SEGFORGE_KERNELS must be auto/native/numpy, got {_choice!r}")

_impl = numpy_backend
if _choice != "numpy":
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "native":
            raise

BACKEND = _impl.NAME
im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
