"""Kernel dispatch: numba-compiled path when available, numpy twin otherwise."""

from __future__ import annotations

import numpy as np

from . import kernels_numpy
from .accel import JIT_ENABLED
from .kernels_numpy import BEAM_RECORD_SIZE  # noqa: F401  (re-export)

if JIT_ENABLED:
    from . import kernels_numba as _impl
else:
    _impl = kernels_numpy


def intensity_sum(points: np.ndarray, records: np.ndarray) -> np.ndarray:
    """Summed astigmatic-Gaussian intensity of all beam records at each point."""
    points = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    records = np.ascontiguousarray(np.atleast_2d(records), dtype=np.float64)
    if records.shape[1] != BEAM_RECORD_SIZE:
        raise ValueError(f"beam records must have {BEAM_RECORD_SIZE} columns")
    return _impl.intensity_sum(points, records)
