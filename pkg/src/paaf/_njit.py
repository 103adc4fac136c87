"""Numba shim: hot kernels are jitted unless PAAF_DISABLE_NUMBA is set.

With jitting disabled (or numba missing) the same functions run as plain
Python over numpy arrays, so results are identical on both paths.
"""

import os

try:
    import numba as nb

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

JIT_ENABLED = _HAVE_NUMBA and os.environ.get("PAAF_DISABLE_NUMBA", "") not in (
    "1",
    "true",
    "yes",
)


def njit(*args, **kwargs):
    if JIT_ENABLED:
        return nb.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda func: func
