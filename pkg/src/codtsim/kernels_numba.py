"""Numba-compiled twin of kernels_numpy (scalar loops, parallel over points)."""

from __future__ import annotations

import math

import numpy as np

from .accel import njit, prange


@njit(parallel=True, cache=True)
def intensity_sum(points, records):  # pragma: no cover - exercised via dispatch
    n = points.shape[0]
    m = records.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        acc = 0.0
        for j in range(m):
            rx = px - records[j, 0]
            ry = py - records[j, 1]
            rz = pz - records[j, 2]
            zeta = rx * records[j, 3] + ry * records[j, 4] + rz * records[j, 5]
            xi = rx * records[j, 6] + ry * records[j, 7] + rz * records[j, 8]
            nu = rx * records[j, 9] + ry * records[j, 10] + rz * records[j, 11]
            th = (zeta - records[j, 14]) / records[j, 16]
            tv = (zeta - records[j, 15]) / records[j, 17]
            wh = records[j, 12] * math.sqrt(1.0 + th * th)
            wv = records[j, 13] * math.sqrt(1.0 + tv * tv)
            acc += (
                2.0
                * records[j, 18]
                / (math.pi * wh * wv)
                * math.exp(-2.0 * (xi / wh) ** 2 - 2.0 * (nu / wv) ** 2)
            )
        out[i] = acc
    return out
