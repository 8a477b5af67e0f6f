"""Numba switch. Set FQCOUPLE_PURE_NUMPY=1 to force the numpy fallbacks."""

import os

USE_NUMBA = os.environ.get("FQCOUPLE_PURE_NUMPY", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

if not USE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
