"""Numba toggle for the hot kernels.

JIT compilation is on by default and disabled either by setting the
environment variable ``SCDN_NO_NUMBA=1`` or automatically when numba is
not importable.  Modules define loop kernels once and decorate them with
:func:`maybe_njit`; vectorized numpy alternatives live next to them in
``kernels.py`` and are selected through the same flag.
"""

from __future__ import annotations

import logging
import os

logger = logging.getLogger(__name__)

_ENV_FLAG = "SCDN_NO_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in ("1", "true", "yes")


NUMBA_ENABLED = not _env_disabled()
if NUMBA_ENABLED:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
        logger.warning("numba unavailable, falling back to pure numpy kernels")

if not NUMBA_ENABLED:
    _njit = None


def maybe_njit(*jit_args, **jit_kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return _njit(*jit_args, cache=True, **jit_kwargs)

    def passthrough(func):
        return func

    return passthrough
