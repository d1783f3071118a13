"""Numba JIT switch.

The hot grid kernels are compiled with numba when it is importable and the
environment variable CODTSIM_DISABLE_JIT is not set to a truthy value.
With JIT disabled (or numba missing) the pure-numpy kernel twin is used;
both paths produce identical results (see benchmarks/bench_kernels.py).
"""

from __future__ import annotations

import os


def _env_disabled() -> bool:
    return os.environ.get("CODTSIM_DISABLE_JIT", "0").lower() in ("1", "true", "yes")


JIT_ENABLED = not _env_disabled()

if JIT_ENABLED:
    try:
        from numba import njit, prange  # noqa: F401
    except ImportError:
        JIT_ENABLED = False

if not JIT_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    def prange(n):
        return range(n)
