"""Kernel backend selection.

Set ``MODESWITCH_NO_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once, at first import of :mod:`modeswitch.kernels`.
"""
from __future__ import annotations

import os

ENV_FLAG = "MODESWITCH_NO_NUMBA"


def numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def use_numba() -> bool:
    return numba_requested() and numba_available()
