"""Backend selection for the event kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``CALIB_PURE_PYTHON`` is set to a non-empty value, the
pure-Python implementations are used. ``BACKEND`` names the active one.
"""

import os

from calib import _pykernels

if os.environ.get("CALIB_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from calib import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

nonparalyzable_mask = _impl.nonparalyzable_mask
paralyzable_mask = _impl.paralyzable_mask
driver_accept = _impl.driver_accept
flip_mask = _impl.flip_mask
match_coincidences = _impl.match_coincidences

__all__ = [
    "BACKEND",
    "nonparalyzable_mask",
    "paralyzable_mask",
    "driver_accept",
    "flip_mask",
    "match_coincidences",
]
