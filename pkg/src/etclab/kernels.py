"""Backend selection for the Monte Carlo kernels.

The compiled extension is used when it imports; ``ETCLAB_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

if os.environ.get("ETCLAB_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

BACKEND = _impl.BACKEND
etc_segment = _impl.etc_segment
ttc_segment = _impl.ttc_segment

__all__ = ["BACKEND", "etc_segment", "ttc_segment"]
