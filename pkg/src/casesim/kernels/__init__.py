"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The compiled module is used when it imports cleanly, unless the
``CASESIM_PURE`` environment variable is set to a non-empty value.
"""

import os

from . import _pykernels as pure

try:
    if os.environ.get("CASESIM_PURE"):
        raise ImportError("pure-Python kernels forced by CASESIM_PURE")
    from . import _ckernels as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else pure

BACKEND = "cython" if compiled is not None else "python"

grey_level = _impl.grey_level
project_grey = _impl.project_grey
bilinear_resize = _impl.bilinear_resize
lcs_length = _impl.lcs_length
reservoir_cluster_pairs = _impl.reservoir_cluster_pairs
SplitMix64 = _impl.SplitMix64
round_half_away = pure.round_half_away

__all__ = [
    "BACKEND",
    "SplitMix64",
    "bilinear_resize",
    "compiled",
    "grey_level",
    "lcs_length",
    "project_grey",
    "pure",
    "reservoir_cluster_pairs",
    "round_half_away",
]
