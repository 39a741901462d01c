"""Hot kernels with a compiled backend and a pure-Python fallback.

The Cython extension is used when it has been built; otherwise, or when
``FLOWGUIDE_PURE_PYTHON=1`` is set, the numpy implementations are used.
``BACKEND`` names the active choice.
"""
import os

from . import _py

if os.environ.get("FLOWGUIDE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _py
    BACKEND = "python"
else:
    try:
        from . import _cy as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _py
        BACKEND = "python"

mixture_velocity = _impl.mixture_velocity
mean_pairwise_distance = _impl.mean_pairwise_distance

__all__ = ["BACKEND", "mixture_velocity", "mean_pairwise_distance"]
