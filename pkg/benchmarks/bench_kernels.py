"""Benchmark the hot intensity-summation kernel: numba JIT vs pure numpy.

The workload mirrors time-averaged field sampling: a painted waveform
discretized into 256 phases (512 beam records) evaluated on a 3D grid.

Usage: python benchmarks/bench_kernels.py [--dims N] [--phases N]
Setting CODTSIM_DISABLE_JIT=1 makes the package-level dispatch use the numpy
path; this script times both implementations directly regardless.
"""

import argparse
import time

import numpy as np

from codtsim import kernels_numpy
from codtsim.accel import JIT_ENABLED
from codtsim.constants import PhysicalConstants
from codtsim.optics import InputBeam, OpticalLayout
from codtsim.painting import synthesize_waveform
from codtsim.potential import time_averaged_potential


def build_workload(dims: int, phases: int):
    layout = OpticalLayout()
    inputs = (InputBeam(), InputBeam())
    waveform = synthesize_waveform(layout, "line-paint", {"amplitude_um": 370.0})
    pot = time_averaged_potential(
        PhysicalConstants(gravity=0.0), layout, inputs, waveform, n_phases=phases
    )
    grid = np.linspace(-1e-3, 1e-3, dims)
    pts = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
    return pot.records, np.ascontiguousarray(pts)


def bench(func, pts, records, repeats=3):
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = func(pts, records)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dims", type=int, default=48)
    parser.add_argument("--phases", type=int, default=256)
    args = parser.parse_args()

    records, pts = build_workload(args.dims, args.phases)
    n_eval = pts.shape[0] * records.shape[0]
    print(f"{pts.shape[0]} points x {records.shape[0]} beam records = {n_eval / 1e6:.0f} M evaluations")

    t_np, ref = bench(kernels_numpy.intensity_sum, pts, records)
    print(f"numpy:  {t_np:8.3f} s   ({n_eval / t_np / 1e6:7.1f} M eval/s)")

    if JIT_ENABLED:
        from codtsim import kernels_numba

        kernels_numba.intensity_sum(pts[:128], records)  # compile
        t_nb, out = bench(kernels_numba.intensity_sum, pts, records)
        print(f"numba:  {t_nb:8.3f} s   ({n_eval / t_nb / 1e6:7.1f} M eval/s)")
        print(f"speedup: {t_np / t_nb:.1f}x")
        err = np.max(np.abs(out - ref) / np.abs(ref).max())
        print(f"max relative disagreement: {err:.2e}")
        assert err < 1e-12, "numba and numpy kernels disagree"
    else:
        print("numba path disabled (CODTSIM_DISABLE_JIT set or numba missing)")


if __name__ == "__main__":
    main()
