"""Hot numerical kernels with a compiled core and a pure-numpy fallback.

The compiled extension (`_native`, built from Cython at install time) is
preferred; when it is missing, or when the environment variable
``LATTICENAV_PURE_PYTHON`` is set to a non-empty value, the numpy fallback
(`_fallback`) is used. Both expose the same functions with identical
semantics; ``IMPLEMENTATION`` records which one is active.
"""

import os

from . import _fallback

if os.environ.get("LATTICENAV_PURE_PYTHON"):
    _impl = _fallback
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _fallback

IMPLEMENTATION = "native" if _impl is not _fallback else "fallback"
HAVE_NATIVE = IMPLEMENTATION == "native"

solve_banded_spd = _impl.solve_banded_spd
bilinear_values = _impl.bilinear_values
bilinear_with_gradient = _impl.bilinear_with_gradient
dijkstra_grid = _impl.dijkstra_grid

__all__ = [
    "HAVE_NATIVE",
    "IMPLEMENTATION",
    "bilinear_values",
    "bilinear_with_gradient",
    "dijkstra_grid",
    "solve_banded_spd",
]
