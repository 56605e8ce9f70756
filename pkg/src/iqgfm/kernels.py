"""Kernel backend selection: compiled extension if importable, else Python."""
import os

from . import _pykernels

BACKEND = "python"
emt_run = _pykernels.emt_run
running_sum = _pykernels.running_sum

if os.environ.get("IQGFM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        emt_run = _kernels.emt_run
        running_sum = _kernels.running_sum
