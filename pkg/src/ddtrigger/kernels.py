"""Kernel selection: compiled extension when importable, else the Python
reference.  Set ``DDTRIGGER_PURE=1`` to force the reference path."""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("DDTRIGGER_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

ets_loop = _impl.ets_loop
sts_scan = _impl.sts_scan
dlf_segment = _impl.dlf_segment

__all__ = ["BACKEND", "ets_loop", "sts_scan", "dlf_segment"]
