"""Kernel backend selection.

The compiled extension is used when importable; set ``FPCS_LAB_PURE=1`` to
force the pure-Python reference kernels.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("FPCS_LAB_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"

min_norm_point = kernels.min_norm_point
flow = kernels.flow
flow_jumps = kernels.flow_jumps
HORIZON = _pykernels.HORIZON
EQUILIBRIUM = _pykernels.EQUILIBRIUM
