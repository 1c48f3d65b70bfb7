"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``TAMEDNS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("TAMEDNS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

taming = _impl.taming
tamed_flux = _impl.tamed_flux
advect = _impl.advect
leray = _impl.leray
assemble_drift = _impl.assemble_drift

__all__ = ["BACKEND", "taming", "tamed_flux", "advect", "leray", "assemble_drift"]
