"""Optional numba acceleration.

Every hot kernel in this package is written as plain numpy code and wrapped
with :func:`maybe_njit`.  When numba is importable (and not disabled) the
wrapper is ``numba.njit``; otherwise it is the identity, so the same source
runs as ordinary Python.  Set the environment variable ``LANDNET_NO_NUMBA=1``
before import to force the pure-numpy path, e.g. for debugging or for the
benchmark comparing both paths.
"""

import os

_flag = os.environ.get("LANDNET_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes", "on"}

if not NUMBA_DISABLED:
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but be safe
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


def maybe_njit(*args, **kwargs):
    """``numba.njit`` when acceleration is active, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return _njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(func):
        return func

    return wrap
